use std::ffi::{c_char, CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use fmri2ges::denoiser::{AdamConfig, DenoiserConfig};
use fmri2ges::f2g::{train_f2g, DualConfig};
use fmri2ges::f2t::{BeamConfig, EncodingConfig, F2tDecoder, FmriRecord};
use fmri2ges::io::{f2g_to_checkpoint, f2t_to_checkpoint, t2g_to_checkpoint, write_dataset, KeyValues};
use fmri2ges::synthdata::{make_datasets, SplitSizes, World, WorldConfig};
use fmri2ges::t2g::{text_clips, train_t2g, T2gConfig};
use fmri2ges_ffi::*;

struct Fixture {
    dir: tempfile::TempDir,
}

impl Fixture {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let world = World::new(WorldConfig::default()).unwrap();
        let sizes = SplitSizes {
            f2t_records: 8,
            t2g_records: 3,
            unpaired_records: 2,
            corpus_sequences: 50,
            ..SplitSizes::default()
        };
        let data = make_datasets(&world, &sizes, 3).unwrap();
        write_dataset(&dir.path().join("data"), &world, &data, &KeyValues::new()).unwrap();
        let clips = text_clips(data.paired_t2g.iter().map(|r| (&r.frame_words[..], &r.gestures)), &world.text_table, 64, 16)
            .unwrap();
        let tcfg = T2gConfig {
            denoiser: DenoiserConfig::new(world.text_table.dim()).with_model(8, 1),
            steps: 3,
            batch_size: 2,
            ..T2gConfig::new(world.text_table.dim())
        };
        let t2g = train_t2g(&clips, &world.text_table, &tcfg, 1).unwrap().model;
        t2g_to_checkpoint(&t2g, &KeyValues::new()).unwrap().save(&dir.path().join("t2g.ckpt")).unwrap();
        let runs: Vec<_> = data.paired_f2t.iter().map(|r| (r.chain.timed(2.0), r.fmri.clone())).collect();
        let dec = F2tDecoder::fit(&runs, &data.corpus, &world.feature_table, &EncodingConfig::default(), BeamConfig::default())
            .unwrap();
        f2t_to_checkpoint(&dec, &KeyValues::new()).unwrap().save(&dir.path().join("f2t.ckpt")).unwrap();
        let vox = world.config.voxels;
        let cfg = DualConfig {
            steps: 2,
            batch_size: 2,
            align_batch_size: 2,
            adam: AdamConfig::default(),
            fmri_denoiser: DenoiserConfig::new(vox).with_model(8, 1),
            ..DualConfig::new(vox)
        };
        let unpaired: Vec<FmriRecord> = data.unpaired_fmri.iter().map(|r| r.fmri.clone()).collect();
        let run = train_f2g(&t2g, &dec, &clips, &unpaired, &cfg, 2).unwrap();
        f2g_to_checkpoint(&run.checkpoint, &KeyValues::new()).unwrap().save(&dir.path().join("f2g.ckpt")).unwrap();
        Self { dir }
    }

    fn path(&self, name: &str) -> CString {
        CString::new(self.dir.path().join(name).to_str().unwrap()).unwrap()
    }
}

fn last_error() -> String {
    let mut buf = vec![0 as c_char; 512];
    unsafe {
        f2g_last_error(buf.as_mut_ptr(), buf.len());
        CStr::from_ptr(buf.as_ptr()).to_string_lossy().into_owned()
    }
}

#[test]
fn round_trip_through_handles() {
    let fx = Fixture::new();
    unsafe {
        let mut ds = ptr::null_mut();
        assert_eq!(f2g_dataset_load(fx.path("data").as_ptr(), &mut ds), F2gStatus::Ok);
        assert_eq!(f2g_dataset_unpaired_count(ds), 2);
        let (mut n_tr, mut n_vox, mut tr) = (0usize, 0usize, 0.0f64);
        assert_eq!(f2g_dataset_unpaired_shape(ds, 0, &mut n_tr, &mut n_vox, &mut tr), F2gStatus::Ok);
        let mut fmri = vec![0.0; n_tr * n_vox];
        assert_eq!(f2g_dataset_unpaired_fmri(ds, 0, fmri.as_mut_ptr(), 3), F2gStatus::BufferTooSmall);
        assert_eq!(f2g_dataset_unpaired_fmri(ds, 0, fmri.as_mut_ptr(), fmri.len()), F2gStatus::Ok);
        assert_eq!(f2g_dataset_unpaired_shape(ds, 9, &mut n_tr, &mut n_vox, &mut tr), F2gStatus::InvalidArgument);

        let mut model = ptr::null_mut();
        assert_eq!(f2g_model_load(fx.path("f2g.ckpt").as_ptr(), &mut model), F2gStatus::Ok);
        let mut kind = F2gModelKind::Text;
        assert_eq!(f2g_model_kind(model, &mut kind), F2gStatus::Ok);
        assert_eq!(kind, F2gModelKind::Fmri);

        let mut a = ptr::null_mut();
        let mut b = ptr::null_mut();
        assert_eq!(f2g_generate_from_fmri(model, fmri.as_ptr(), n_tr, n_vox, tr, 5, &mut a), F2gStatus::Ok);
        assert_eq!(f2g_generate_from_fmri(model, fmri.as_ptr(), n_tr, n_vox, tr, 5, &mut b), F2gStatus::Ok);
        assert_eq!(f2g_gestures_count(a), 1);
        let frames = f2g_gestures_frames(a, 0);
        assert_eq!(frames, n_tr * 30);
        let mut buf = vec![0.0; frames * f2g_frame_width()];
        assert_eq!(f2g_gestures_copy(a, 0, buf.as_mut_ptr(), buf.len()), F2gStatus::Ok);
        let mut m = F2gMetrics::default();
        assert_eq!(f2g_evaluate(a, b, &mut m), F2gStatus::Ok);
        assert_eq!((m.mae, m.pck), (0.0, 1.0));

        let saved = fx.path("gen.ckpt");
        assert_eq!(f2g_gestures_save(a, saved.as_ptr()), F2gStatus::Ok);
        let mut c = ptr::null_mut();
        assert_eq!(f2g_gestures_load(saved.as_ptr(), &mut c), F2gStatus::Ok);
        let mut again = vec![0.0; buf.len()];
        assert_eq!(f2g_gestures_copy(c, 0, again.as_mut_ptr(), again.len()), F2gStatus::Ok);
        assert_eq!(buf, again);
        let svg = fx.path("a.svg");
        assert_eq!(f2g_gestures_render_svg(c, 0, 8, svg.as_ptr()), F2gStatus::Ok);
        assert!(std::fs::read_to_string(fx.dir.path().join("a.svg")).unwrap().starts_with("<svg"));

        let mut dec = ptr::null_mut();
        assert_eq!(f2g_decoder_load(fx.path("f2t.ckpt").as_ptr(), &mut dec), F2gStatus::Ok);
        let mut len = 0usize;
        let mut words = [0u32; 1];
        assert_eq!(
            f2g_decode_text(dec, fmri.as_ptr(), n_tr, n_vox, tr, 1, words.as_mut_ptr(), 1, &mut len),
            F2gStatus::BufferTooSmall
        );
        let mut words = vec![0u32; len];
        assert_eq!(
            f2g_decode_text(dec, fmri.as_ptr(), n_tr, n_vox, tr, 1, words.as_mut_ptr(), len, &mut len),
            F2gStatus::Ok
        );
        let mut text = ptr::null_mut();
        let frame_words = vec![words[0]; 64];
        assert_eq!(f2g_generate_from_text(model, frame_words.as_ptr(), 64, 0, &mut text), F2gStatus::Ok);
        assert_eq!(f2g_gestures_frames(text, 0), 64);

        for g in [a, b, c, text] {
            f2g_gestures_free(g);
        }
        f2g_decoder_free(dec);
        f2g_model_free(model);
        f2g_dataset_free(ds);
    }
}

#[test]
fn errors_carry_codes_and_messages() {
    let fx = Fixture::new();
    unsafe {
        let mut model = ptr::null_mut();
        assert_eq!(f2g_model_load(ptr::null(), &mut model), F2gStatus::NullPointer);
        assert!(last_error().contains("null"));
        assert_eq!(f2g_model_load(fx.path("nothing.ckpt").as_ptr(), &mut model), F2gStatus::Io);
        assert_eq!(f2g_model_load(fx.path("f2t.ckpt").as_ptr(), &mut model), F2gStatus::WrongKind);
        assert!(last_error().contains("f2t"), "{}", last_error());

        let path = fx.dir.path().join("t2g.ckpt");
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[20] ^= 4;
        std::fs::write(fx.dir.path().join("bad.ckpt"), bytes).unwrap();
        assert_eq!(f2g_model_load(fx.path("bad.ckpt").as_ptr(), &mut model), F2gStatus::Checksum);

        assert_eq!(f2g_model_load(fx.path("t2g.ckpt").as_ptr(), &mut model), F2gStatus::Ok);
        assert!(last_error().is_empty());
        let fmri = [0.0; 4];
        let mut out = ptr::null_mut();
        assert_eq!(f2g_generate_from_fmri(model, fmri.as_ptr(), 2, 2, 2.0, 0, &mut out), F2gStatus::WrongKind);
        let bad_word = [u32::MAX - 1; 4];
        assert_eq!(f2g_generate_from_text(model, bad_word.as_ptr(), 4, 0, &mut out), F2gStatus::InvalidArgument);
        assert!(out.is_null());
        f2g_model_free(model);

        f2g_model_free(ptr::null_mut());
        f2g_gestures_free(ptr::null_mut());
        assert_eq!(f2g_gestures_count(ptr::null()), 0);
        assert_eq!(CStr::from_ptr(f2g_version()).to_str().unwrap(), env!("CARGO_PKG_VERSION"));
    }
}

fn target_dir() -> PathBuf {
    let exe = std::env::current_exe().unwrap();
    exe.parent().and_then(Path::parent).unwrap().to_path_buf()
}

#[test]
fn c_program_links_against_header() {
    let header_dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("include");
    let lib = target_dir().join("libfmri2ges_ffi.a");
    if !lib.exists() || Command::new("cc").arg("--version").output().is_err() {
        eprintln!("skipping: static library or C compiler unavailable");
        return;
    }
    let fx = Fixture::new();
    let src = fx.dir.path().join("probe.c");
    std::fs::write(
        &src,
        r#"#include <stdio.h>
#include "fmri2ges.h"
int main(int argc, char **argv) {
    F2gModel *m = NULL;
    if (f2g_model_load(argv[1], &m) != F2G_STATUS_OK) return 3;
    F2gModelKind kind;
    f2g_model_kind(m, &kind);
    uint32_t words[64] = {0};
    F2gGestures *g = NULL;
    if (f2g_generate_from_text(m, words, 64, 7, &g) != F2G_STATUS_OK) return 4;
    F2gMetrics out;
    if (f2g_evaluate(g, g, &out) != F2G_STATUS_OK) return 5;
    F2gStatus bad = f2g_model_load(argv[2], &m);
    char msg[256];
    f2g_last_error(msg, sizeof msg);
    printf("kind=%d frames=%zu mae=%g bad=%d msg=%s\n", (int)kind, f2g_gestures_frames(g, 0), out.mae, (int)bad, msg);
    f2g_gestures_free(g);
    return argc == 3 ? 0 : 6;
}
"#,
    )
    .unwrap();
    let exe = fx.dir.path().join("probe");
    let status = Command::new("cc")
        .arg(&src)
        .arg("-I")
        .arg(&header_dir)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
        .unwrap();
    assert!(status.success());
    let out = Command::new(&exe).arg(fx.dir.path().join("t2g.ckpt")).arg(fx.dir.path().join("absent")).output().unwrap();
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert_eq!(out.status.code(), Some(0), "{stdout}");
    assert!(stdout.starts_with("kind=1 frames=64 mae=0 bad=3 msg="), "{stdout}");
}

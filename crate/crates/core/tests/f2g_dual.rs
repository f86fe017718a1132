use std::sync::OnceLock;

use fmri2ges::denoiser::{AdamConfig, DenoiserConfig, DenoiserParams};
use fmri2ges::diffusion::GestureClip;
use fmri2ges::f2g::{
    build_pseudo_pool, generate_from_fmri, make_pseudo, train_dual, train_f2g, DualConfig, F2gRun, PseudoMode,
    PseudoPool,
};
use fmri2ges::f2t::{word_error_rate, BeamConfig, EncodingConfig, F2tDecoder, FmriRecord};
use fmri2ges::metrics::mae;
use fmri2ges::rng::derive_seed;
use fmri2ges::synthdata::{make_datasets, make_f2t_record, render_gestures, Datasets, SplitSizes, World, WorldConfig};
use fmri2ges::t2g::{text_clips, train_from, train_t2g, ScheduleConfig, T2gConfig, T2gModel, TrainingClip};
use ndarray::s;

struct Fixture {
    world: World,
    data: Datasets,
    clips: Vec<TrainingClip>,
    t2g_cfg: T2gConfig,
    t2g: T2gModel,
    decoder: F2tDecoder,
}

fn small_t2g(text_dim: usize, steps: usize) -> T2gConfig {
    T2gConfig {
        denoiser: DenoiserConfig::new(text_dim).with_model(16, 1),
        schedule: ScheduleConfig { steps: 10, beta_start: 1e-3, beta_end: 0.1 },
        batch_size: 4,
        steps,
        adam: AdamConfig { lr: 1e-3, ..AdamConfig::default() },
        ..T2gConfig::new(text_dim)
    }
}

fn small_dual(voxels: usize, steps: usize) -> DualConfig {
    DualConfig {
        steps,
        batch_size: 4,
        align_batch_size: 4,
        adam: AdamConfig { lr: 1e-3, ..AdamConfig::default() },
        fmri_denoiser: DenoiserConfig::new(voxels).with_model(16, 1),
        ..DualConfig::new(voxels)
    }
}

fn decoder_for(world: &World, data: &Datasets) -> F2tDecoder {
    let runs: Vec<_> = data.paired_f2t.iter().map(|r| (r.chain.timed(2.0), r.fmri.clone())).collect();
    F2tDecoder::fit(&runs, &data.corpus, &world.feature_table, &EncodingConfig::default(), BeamConfig::default())
        .unwrap()
}

fn fixture() -> &'static Fixture {
    static CELL: OnceLock<Fixture> = OnceLock::new();
    CELL.get_or_init(|| {
        let world = World::new(WorldConfig { seed: 5, ..WorldConfig::default() }).unwrap();
        let sizes = SplitSizes { t2g_records: 8, unpaired_records: 6, corpus_sequences: 500, ..SplitSizes::default() };
        let data = make_datasets(&world, &sizes, 5).unwrap();
        let clips =
            text_clips(data.paired_t2g.iter().map(|r| (&r.frame_words[..], &r.gestures)), &world.text_table, 64, 16)
                .unwrap();
        let t2g_cfg = small_t2g(world.config.text_dim, 200);
        let t2g = train_t2g(&clips, &world.text_table, &t2g_cfg, 3).unwrap().model;
        let decoder = decoder_for(&world, &data);
        Fixture { world, data, clips, t2g_cfg, t2g, decoder }
    })
}

fn unpaired(f: &Fixture) -> Vec<FmriRecord> {
    f.data.unpaired_fmri.iter().map(|r| r.fmri.clone()).collect()
}

fn pool(f: &Fixture, mode: PseudoMode) -> PseudoPool {
    let cfg = DualConfig { pseudo_mode: mode, ..small_dual(f.world.config.voxels, 1) };
    build_pseudo_pool(&f.decoder, &f.t2g, &unpaired(f), &cfg, 8).unwrap()
}

fn trained() -> &'static F2gRun {
    static CELL: OnceLock<F2gRun> = OnceLock::new();
    CELL.get_or_init(|| {
        let f = fixture();
        let cfg = small_dual(f.world.config.voxels, 300);
        train_f2g(&f.t2g, &f.decoder, &f.clips, &unpaired(f), &cfg, 4).unwrap()
    })
}

#[test]
fn pseudo_pairs_are_reproducible() {
    let f = fixture();
    let cfg = small_dual(f.world.config.voxels, 1);
    let rec = &f.data.unpaired_fmri[0].fmri;
    let a = make_pseudo(&f.decoder, &f.t2g, rec, &cfg, 11).unwrap();
    assert_eq!(a, make_pseudo(&f.decoder, &f.t2g, rec, &cfg, 11).unwrap());
    assert!(!a.pairs.is_empty());
    for p in &a.pairs {
        assert_eq!(p.gesture.frames().dim(), (64, 98));
        assert_eq!(p.len(), 64);
        assert_eq!(p.fmri.nrows(), 64);
        assert_eq!(p.regenerate(&f.t2g).unwrap(), p.gesture);
        assert!(p.trajectory.is_none());
    }
}

#[test]
fn chain_mode_keeps_every_state() {
    let f = fixture();
    let chain = pool(f, PseudoMode::ChainIntermediate);
    let renoise = pool(f, PseudoMode::Renoise);
    assert_eq!(chain.pairs.len(), renoise.pairs.len());
    for (c, r) in chain.pairs.iter().zip(&renoise.pairs) {
        assert_eq!(c.gesture, r.gesture);
        let tr = c.trajectory.as_ref().unwrap();
        assert_eq!(tr.len(), f.t2g.schedule.steps);
        assert!(tr.iter().all(|x| x.dim() == (64, 98)));
    }
    let cfg = DualConfig { pseudo_mode: PseudoMode::ChainIntermediate, ..small_dual(f.world.config.voxels, 5) };
    let run = train_dual(&f.t2g, &f.clips, &chain, &cfg, 1).unwrap();
    assert!(run.alignment_curve.iter().all(|v| v.is_finite() && *v > 0.0));
    assert!(train_dual(&f.t2g, &f.clips, &renoise, &cfg, 1).is_err());
}

#[test]
fn zero_lambda_replays_phase_one() {
    let f = fixture();
    let pool = pool(f, PseudoMode::Renoise);
    let cfg = DualConfig { lambda: 0.0, ..small_dual(f.world.config.voxels, 40) };
    let run = train_dual(&f.t2g, &f.clips, &pool, &cfg, 9).unwrap();
    let continued = T2gConfig { steps: 40, adam: cfg.adam, batch_size: cfg.batch_size, ..f.t2g_cfg.clone() };
    let (expected, curve) = train_from(f.t2g.params.clone(), &f.clips, &continued, 9).unwrap();
    assert_eq!(run.checkpoint.text, expected);
    assert_eq!(run.paired_curve, curve);
    let init = DenoiserParams::<f32>::init(cfg.fmri_denoiser, derive_seed(9, "f2g-init", 0)).unwrap();
    assert_eq!(run.checkpoint.fmri, init);
    assert!(run.alignment_curve.iter().all(|&v| v == 0.0));
}

#[test]
fn same_seed_same_checkpoint() {
    let f = fixture();
    let pool = pool(f, PseudoMode::Renoise);
    let cfg = small_dual(f.world.config.voxels, 10);
    let a = train_dual(&f.t2g, &f.clips, &pool, &cfg, 2).unwrap();
    let b = train_dual(&f.t2g, &f.clips, &pool, &cfg, 2).unwrap();
    assert_eq!(a, b);
    let c = train_dual(&f.t2g, &f.clips, &pool, &cfg, 3).unwrap();
    assert_ne!(a.checkpoint.fmri, c.checkpoint.fmri);
}

#[test]
fn frozen_text_model_stays_put() {
    let f = fixture();
    let pool = pool(f, PseudoMode::Renoise);
    let cfg = DualConfig { freeze_text: true, ..small_dual(f.world.config.voxels, 10) };
    let run = train_dual(&f.t2g, &[], &pool, &cfg, 2).unwrap();
    assert_eq!(run.checkpoint.text, f.t2g.params);
    assert!(run.paired_curve.iter().all(|&v| v == 0.0));
}

#[test]
fn trained_model_responds_to_fmri() {
    let f = fixture();
    let run = trained();
    assert!(run.alignment_curve.iter().all(|v| v.is_finite()));
    let records: Vec<_> = (0..21).map(|i| make_f2t_record(&f.world, 12, 500 + i).unwrap().fmri).collect();
    for pair in records.windows(2) {
        let a = generate_from_fmri(&run.checkpoint, &pair[0], 7).unwrap();
        let b = generate_from_fmri(&run.checkpoint, &pair[1], 7).unwrap();
        assert_eq!(a.len(), pair[0].n_tr() * 30);
        assert_ne!(a, b);
        assert_eq!(a, generate_from_fmri(&run.checkpoint, &pair[0], 7).unwrap());
    }
}

#[test]
fn rejects_bad_inputs() {
    let f = fixture();
    let cfg = small_dual(f.world.config.voxels, 1);
    assert!(train_f2g(&f.t2g, &f.decoder, &f.clips, &[], &cfg, 0).is_err());
    assert!(train_dual(&f.t2g, &f.clips, &PseudoPool::default(), &cfg, 0).is_err());
    let wide = small_dual(f.world.config.voxels + 1, 1);
    assert!(train_dual(&f.t2g, &f.clips, &pool(f, PseudoMode::Renoise), &wide, 0).is_err());
    let rec = &f.data.unpaired_fmri[0].fmri;
    let narrow = FmriRecord::new(rec.voxels().slice(s![.., 1..]).to_owned(), 2.0, rec.region()).unwrap();
    assert!(generate_from_fmri(&trained().checkpoint, &narrow, 0).is_err());
}

/// A text model that has memorized one clip, fed fMRI that decodes to that
/// clip's words, reproduces the clip.
#[test]
fn memorized_text_model_closes_the_loop() {
    let world = World::new(WorldConfig { seed: 21, ..WorldConfig::default() }).unwrap();
    let sizes = SplitSizes { t2g_records: 0, unpaired_records: 0, ..SplitSizes::default() };
    let data = make_datasets(&world, &sizes, 21).unwrap();
    let decoder = decoder_for(&world, &data);
    let cfg = DualConfig::new(world.config.voxels);
    let pseudo_seed = 17;
    let rec = (0..50)
        .map(|i| make_f2t_record(&world, 10, 9000 + i).unwrap())
        .find(|r| {
            let seed = derive_seed(pseudo_seed, "pseudo-decode", 0);
            let words: Vec<_> = decoder.decode(&r.fmri, seed).unwrap().iter().map(|w| w.word).collect();
            word_error_rate(&r.chain.words(), &words) == 0.0
        })
        .expect("a record that decodes exactly");
    let (frame_words, gestures) = render_gestures(&world, &rec.chain, 3).unwrap();
    let truth = GestureClip::new(gestures.frames().slice(s![..64, ..]).to_owned()).unwrap();
    let clips = text_clips([(&frame_words[..64], &truth)], &world.text_table, 64, 64).unwrap();
    let t2g_cfg = T2gConfig {
        denoiser: DenoiserConfig::new(world.config.text_dim).with_model(32, 2),
        batch_size: 8,
        steps: 1500,
        adam: AdamConfig { lr: 1e-3, ..AdamConfig::default() },
        ..T2gConfig::new(world.config.text_dim)
    };
    let t2g = train_t2g(&clips, &world.text_table, &t2g_cfg, 1).unwrap().model;
    let pool = make_pseudo(&decoder, &t2g, &rec.fmri, &cfg, pseudo_seed).unwrap();
    let first = &pool.pairs[0];
    assert_eq!(first.words, frame_words[..64]);
    let err = mae(std::slice::from_ref(&first.gesture), std::slice::from_ref(&truth)).unwrap();
    assert!(err < 0.1, "pseudo gesture MAE {err}");
}

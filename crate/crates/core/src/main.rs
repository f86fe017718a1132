use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand, ValueEnum};
use ndarray::s;

use fmri2ges::align::{frame_aligned_words, replicate_fmri};
use fmri2ges::denoiser::{AdamConfig, DenoiserConfig};
use fmri2ges::f2g::{generate_from_fmri_frames, noise_condition, train_f2g, DualConfig, F2gCheckpoint, PseudoMode, Weighting};
use fmri2ges::f2t::{word_error_rate, BeamConfig, EncodingConfig, F2tDecoder, FmriRecord, RidgeConfig};
use fmri2ges::io::{
    f2g_from_checkpoint, f2g_to_checkpoint, f2t_from_checkpoint, f2t_to_checkpoint, gestures_to_checkpoint,
    load_gestures, model_kind, read_dataset, t2g_from_checkpoint, t2g_to_checkpoint, world_config_from_kv,
    world_config_to_kv, write_dataset, Checkpoint, KeyValues, LoadedDataset, MANIFEST_FILE,
};
use fmri2ges::metrics::{evaluate, FeatureMode, MetricsConfig, PckThreshold};
use fmri2ges::render::{render_svg, RenderConfig};
use fmri2ges::rng::derive_seed;
use fmri2ges::skeleton::bones;
use fmri2ges::synthdata::{make_datasets, SplitSizes, World, WorldConfig};
use fmri2ges::t2g::{generate_from_text, text_clips, ScheduleConfig, T2gConfig, T2gModel, TrainingClip};
use fmri2ges::vocab::words_by_tr;
use fmri2ges::Error;

#[derive(Parser, Debug)]
#[command(name = "fmri2ges", version, about = "Generate co-speech gestures from fMRI via dual brain-decoding alignment")]
struct Cli {
    /// Master seed; every random draw derives from it.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// key=value settings file. Flags given on the command line win.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override one setting, e.g. `--set t2g.steps=500`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    sets: Vec<String>,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic dataset directory.
    GenData {
        /// Record the reference voxel count of the chosen region in the manifest.
        #[arg(long)]
        full_scale: bool,
    },
    /// Phase I: train the text-conditioned gesture model.
    TrainT2g {
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Fit the fMRI-to-text decoder.
    FitF2t {
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Phase II: dual alignment training of the fMRI-conditioned model.
    TrainF2g {
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        t2g: Option<PathBuf>,
        #[arg(long)]
        f2t: Option<PathBuf>,
    },
    /// Decode word sequences from the dataset's unpaired fMRI.
    DecodeText {
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        f2t: Option<PathBuf>,
    },
    /// Generate gesture clips with a trained model.
    Generate {
        #[arg(long)]
        data: Option<PathBuf>,
        /// A t2g or f2g checkpoint.
        #[arg(long)]
        model: Option<PathBuf>,
        /// Needed for text conditioning of an f2g model.
        #[arg(long)]
        f2t: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Condition::Fmri)]
        condition: Condition,
        /// Frames per generated clip.
        #[arg(long, default_value_t = 64)]
        frames: usize,
        /// Upper bound on clips.
        #[arg(long)]
        limit: Option<usize>,
    },
    /// Score generated gestures against references.
    Evaluate {
        #[arg(long = "ref")]
        reference: Option<PathBuf>,
        #[arg(long = "gen")]
        generated: Option<PathBuf>,
    },
    /// Draw a gesture clip as an SVG filmstrip.
    Render {
        #[arg(long)]
        input: Option<PathBuf>,
        /// Dataset whose manifest supplies the bone list.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        clip: usize,
        /// Draw every k-th frame.
        #[arg(long)]
        every: Option<usize>,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Condition {
    Text,
    Fmri,
    Noise,
}

enum Failure {
    Usage(String),
    Data(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Data(e.to_string())
    }
}

type Outcome<T> = std::result::Result<T, Failure>;

/// Defaults for every setting the CLI understands. Anything else in a config
/// file or `--set` is rejected.
fn default_settings() -> KeyValues {
    let mut kv = KeyValues::new();
    let mut world = world_config_to_kv(&WorldConfig::default());
    world = KeyValues::parse(
        &world.to_text().lines().filter(|l| !l.starts_with("seed=")).map(|l| format!("{l}\n")).collect::<String>(),
    )
    .expect("valid");
    kv.extend(&world.with_prefix("world"));
    let sizes = SplitSizes::default();
    for (k, v) in [
        ("f2t_records", sizes.f2t_records),
        ("f2t_words", sizes.f2t_words),
        ("t2g_records", sizes.t2g_records),
        ("t2g_words", sizes.t2g_words),
        ("unpaired_records", sizes.unpaired_records),
        ("unpaired_words", sizes.unpaired_words),
        ("corpus_sequences", sizes.corpus_sequences),
        ("corpus_words", sizes.corpus_words),
    ] {
        kv.set(&format!("sizes.{k}"), v);
    }
    let sched = ScheduleConfig::default();
    for (k, v) in [
        ("t2g.steps", "2000"),
        ("t2g.batch_size", "8"),
        ("t2g.lr", "0.001"),
        ("t2g.d_model", "32"),
        ("t2g.blocks", "2"),
        ("t2g.clip_len", "64"),
        ("t2g.stride", "16"),
        ("f2g.steps", "3000"),
        ("f2g.batch_size", "8"),
        ("f2g.align_batch_size", "16"),
        ("f2g.lr", "0.001"),
        ("f2g.d_model", "32"),
        ("f2g.blocks", "2"),
        ("f2g.lambda", "0.01"),
        ("f2g.weighting", "paper-sqrt"),
        ("f2g.pseudo_mode", "renoise"),
        ("f2g.freeze_text", "false"),
        ("eval.pck", "relative:0.2"),
        ("eval.fgd_features", "raw-frames"),
    ] {
        kv.set(k, v);
    }
    kv.set("diffusion.steps", sched.steps);
    kv.set("diffusion.beta_start", sched.beta_start);
    kv.set("diffusion.beta_end", sched.beta_end);
    let beam = BeamConfig::default();
    kv.set("f2t.beam_width", beam.width);
    kv.set("f2t.top_p", beam.top_p);
    kv.set("f2t.draws", beam.draws);
    kv.set("f2t.lm_weight", beam.lm_weight);
    kv.set("f2t.brain_weight", beam.brain_weight);
    kv.set("f2t.max_expansions", beam.max_expansions);
    let enc = EncodingConfig::default();
    kv.set("f2t.delays", enc.delays.iter().map(ToString::to_string).collect::<Vec<_>>().join(","));
    kv.set("f2t.lobes", enc.lobes);
    kv.set("f2t.ridge_folds", enc.ridge.folds);
    kv.set("eval.bc_sigma", MetricsConfig::default().bc_sigma);
    kv.set("render.every", RenderConfig::default().every);
    kv
}

struct Settings {
    kv: KeyValues,
    seed: u64,
}

impl Settings {
    fn load(cli: &Cli) -> Outcome<Self> {
        let mut kv = default_settings();
        let mut overrides = KeyValues::new();
        if let Some(path) = &cli.config {
            let text = fs::read_to_string(path)
                .map_err(|e| Failure::Data(format!("cannot read config {}: {e}", path.display())))?;
            overrides.extend(&KeyValues::parse(&text)?);
        }
        for s in &cli.sets {
            overrides.extend(&KeyValues::parse(s).map_err(|e| Failure::Usage(format!("--set {s}: {e}")))?);
        }
        let mut seed = 0;
        for (k, v) in overrides.iter() {
            if k == "seed" {
                seed = v.parse().map_err(|_| Failure::Data(format!("bad seed {v:?}")))?;
            } else if kv.get(k).is_none() {
                return Err(Failure::Data(format!("unknown setting {k:?}")));
            } else {
                kv.set(k, v);
            }
        }
        let seed = cli.seed.unwrap_or(seed);
        kv.set("seed", seed);
        Ok(Self { kv, seed })
    }

    fn get<T: std::str::FromStr>(&self, key: &str) -> Outcome<T> {
        Ok(self.kv.require(key)?)
    }

    fn echo(&self, command: &str) -> KeyValues {
        let mut e = KeyValues::new();
        e.set("command", command);
        e.extend(&self.kv);
        e
    }

    fn schedule(&self) -> Outcome<ScheduleConfig> {
        Ok(ScheduleConfig {
            steps: self.get("diffusion.steps")?,
            beta_start: self.get("diffusion.beta_start")?,
            beta_end: self.get("diffusion.beta_end")?,
        })
    }
}

fn need<'a>(path: &'a Option<PathBuf>, flag: &str, what: &str) -> Outcome<&'a Path> {
    path.as_deref().ok_or_else(|| Failure::Data(format!("missing input: --{flag} ({what})")))
}

fn need_out(cli: &Cli) -> Outcome<&Path> {
    cli.out.as_deref().ok_or_else(|| Failure::Usage("--out is required for this command".into()))
}

fn load_data(path: &Option<PathBuf>) -> Outcome<LoadedDataset> {
    Ok(read_dataset(need(path, "data", "dataset directory")?)?)
}

fn load_ckpt(path: &Path) -> Outcome<Checkpoint> {
    Checkpoint::load(path).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))
}

fn training_clips(ds: &LoadedDataset, table_model: &T2gModel, clip_len: usize, stride: usize) -> Outcome<Vec<TrainingClip>> {
    Ok(text_clips(
        ds.data.paired_t2g.iter().map(|r| (&r.frame_words[..], &r.gestures)),
        &table_model.table,
        clip_len,
        stride,
    )?)
}

fn gen_data(cli: &Cli, st: &Settings, full_scale: bool) -> Outcome<()> {
    let out = need_out(cli)?;
    let mut world_cfg = world_config_from_kv(&st.kv.section("world"), WorldConfig::default())?;
    world_cfg.seed = st.seed;
    world_cfg.full_scale |= full_scale;
    let sec = st.kv.section("sizes");
    let sizes = SplitSizes {
        f2t_records: sec.require("f2t_records")?,
        f2t_words: sec.require("f2t_words")?,
        t2g_records: sec.require("t2g_records")?,
        t2g_words: sec.require("t2g_words")?,
        unpaired_records: sec.require("unpaired_records")?,
        unpaired_words: sec.require("unpaired_words")?,
        corpus_sequences: sec.require("corpus_sequences")?,
        corpus_words: sec.require("corpus_words")?,
    };
    let world = World::new(world_cfg)?;
    let data = make_datasets(&world, &sizes, st.seed)?;
    write_dataset(out, &world, &data, &st.echo("gen-data"))?;
    println!("wrote {}", out.join(MANIFEST_FILE).display());
    Ok(())
}

fn train_t2g_cmd(cli: &Cli, st: &Settings, data: &Option<PathBuf>) -> Outcome<()> {
    let out = need_out(cli)?;
    let ds = load_data(data)?;
    let dim = ds.text_table.dim();
    let cfg = T2gConfig {
        denoiser: DenoiserConfig::new(dim).with_model(st.get("t2g.d_model")?, st.get("t2g.blocks")?),
        schedule: st.schedule()?,
        adam: AdamConfig { lr: st.get("t2g.lr")?, ..AdamConfig::default() },
        batch_size: st.get("t2g.batch_size")?,
        steps: st.get("t2g.steps")?,
        clip_len: st.get("t2g.clip_len")?,
        stride: st.get("t2g.stride")?,
    };
    let clips = text_clips(
        ds.data.paired_t2g.iter().map(|r| (&r.frame_words[..], &r.gestures)),
        &ds.text_table,
        cfg.clip_len,
        cfg.stride,
    )?;
    let run = fmri2ges::t2g::train_t2g(&clips, &ds.text_table, &cfg, st.seed)?;
    let tail = run.loss_curve.len().min(50).max(1);
    let last = run.loss_curve.iter().rev().take(tail).sum::<f64>() / tail as f64;
    t2g_to_checkpoint(&run.model, &st.echo("train-t2g"))?.save(out)?;
    println!("trained t2g on {} clips, final loss {last:.5}, wrote {}", clips.len(), out.display());
    Ok(())
}

fn fit_f2t_cmd(cli: &Cli, st: &Settings, data: &Option<PathBuf>) -> Outcome<()> {
    let out = need_out(cli)?;
    let ds = load_data(data)?;
    let delays: String = st.get("f2t.delays")?;
    let delays = delays
        .split(',')
        .map(|d| d.trim().parse::<usize>().map_err(|_| Failure::Data(format!("bad delay {d:?}"))))
        .collect::<Outcome<Vec<_>>>()?;
    let encoding = EncodingConfig {
        delays,
        lobes: st.get("f2t.lobes")?,
        ridge: RidgeConfig { folds: st.get("f2t.ridge_folds")?, ..RidgeConfig::default() },
    };
    let beam = BeamConfig {
        width: st.get("f2t.beam_width")?,
        top_p: st.get("f2t.top_p")?,
        draws: st.get("f2t.draws")?,
        lm_weight: st.get("f2t.lm_weight")?,
        brain_weight: st.get("f2t.brain_weight")?,
        max_expansions: st.get("f2t.max_expansions")?,
    };
    let tr = ds.world.tr_seconds;
    let runs: Vec<_> = ds.data.paired_f2t.iter().map(|r| (r.chain.timed(tr), r.fmri.clone())).collect();
    let decoder = F2tDecoder::fit(&runs, &ds.data.corpus, &ds.feature_table, &encoding, beam)?;
    f2t_to_checkpoint(&decoder, &st.echo("fit-f2t"))?.save(out)?;
    println!("fitted f2t on {} runs (ridge alpha {}), wrote {}", runs.len(), decoder.encoding.ridge.alpha, out.display());
    Ok(())
}

fn train_f2g_cmd(cli: &Cli, st: &Settings, data: &Option<PathBuf>, t2g: &Option<PathBuf>, f2t: &Option<PathBuf>) -> Outcome<()> {
    let t2g_path = need(t2g, "t2g", "text-to-gesture checkpoint")?;
    let f2t_path = need(f2t, "f2t", "fMRI-to-text checkpoint")?;
    let out = need_out(cli)?;
    let ds = load_data(data)?;
    let t2g = t2g_from_checkpoint(&load_ckpt(t2g_path)?)?;
    let decoder = f2t_from_checkpoint(&load_ckpt(f2t_path)?)?;
    let voxels = ds.world.voxels;
    let weighting: Weighting = st.get("f2g.weighting")?;
    let pseudo_mode: PseudoMode = st.get("f2g.pseudo_mode")?;
    let cfg = DualConfig {
        lambda: st.get("f2g.lambda")?,
        weighting,
        pseudo_mode,
        steps: st.get("f2g.steps")?,
        freeze_text: st.get("f2g.freeze_text")?,
        batch_size: st.get("f2g.batch_size")?,
        align_batch_size: st.get("f2g.align_batch_size")?,
        adam: AdamConfig { lr: st.get("f2g.lr")?, ..AdamConfig::default() },
        fmri_denoiser: DenoiserConfig::new(voxels).with_model(st.get("f2g.d_model")?, st.get("f2g.blocks")?),
        clip_len: st.get("t2g.clip_len")?,
        stride: st.get("t2g.stride")?,
        fps: ds.world.fps,
    };
    let clips = training_clips(&ds, &t2g, cfg.clip_len, cfg.stride)?;
    let unpaired: Vec<FmriRecord> = ds.data.unpaired_fmri.iter().map(|r| r.fmri.clone()).collect();
    let run = train_f2g(&t2g, &decoder, &clips, &unpaired, &cfg, st.seed)?;
    f2g_to_checkpoint(&run.checkpoint, &st.echo("train-f2g"))?.save(out)?;
    println!(
        "trained f2g ({} alignment steps, {} silent clips skipped), wrote {}",
        run.alignment_curve.len(),
        run.skipped,
        out.display()
    );
    Ok(())
}

fn decode_text_cmd(cli: &Cli, st: &Settings, data: &Option<PathBuf>, f2t: &Option<PathBuf>) -> Outcome<()> {
    let decoder = f2t_from_checkpoint(&load_ckpt(need(f2t, "f2t", "fMRI-to-text checkpoint")?)?)?;
    let ds = load_data(data)?;
    let mut report = KeyValues::new();
    let mut total = 0.0;
    for (i, rec) in ds.data.unpaired_fmri.iter().enumerate() {
        let words: Vec<u32> = decoder.decode(&rec.fmri, derive_seed(st.seed, "decode", i as u64))?.iter().map(|w| w.word).collect();
        let truth = rec.truth.words();
        let wer = word_error_rate(&truth, &words);
        total += wer;
        report.set(&format!("record.{i}.decoded"), join(&words));
        report.set(&format!("record.{i}.truth"), join(&truth));
        report.set(&format!("record.{i}.wer"), wer);
    }
    let n = ds.data.unpaired_fmri.len().max(1);
    report.set("mean_wer", total / n as f64);
    report.extend(&st.echo("decode-text").with_prefix("echo"));
    emit(cli, &report)
}

fn join(words: &[u32]) -> String {
    words.iter().map(ToString::to_string).collect::<Vec<_>>().join(" ")
}

fn emit(cli: &Cli, report: &KeyValues) -> Outcome<()> {
    let text = report.to_text();
    match &cli.out {
        Some(p) => fs::write(p, &text).map_err(|e| Failure::Data(format!("cannot write {}: {e}", p.display())))?,
        None => print!("{text}"),
    }
    Ok(())
}

enum Model {
    Text(T2gModel),
    Fmri(F2gCheckpoint),
}

#[allow(clippy::too_many_arguments)]
fn generate_cmd(
    cli: &Cli,
    st: &Settings,
    data: &Option<PathBuf>,
    model: &Option<PathBuf>,
    f2t: &Option<PathBuf>,
    condition: Condition,
    frames: usize,
    limit: Option<usize>,
) -> Outcome<()> {
    let ckpt = load_ckpt(need(model, "model", "t2g or f2g checkpoint")?)?;
    let out = need_out(cli)?;
    let ds = load_data(data)?;
    if frames == 0 {
        return Err(Failure::Usage("--frames must be positive".into()));
    }
    let model = match model_kind(&ckpt)?.as_str() {
        "t2g" => Model::Text(t2g_from_checkpoint(&ckpt)?),
        "f2g" => Model::Fmri(f2g_from_checkpoint(&ckpt)?),
        other => return Err(Failure::Data(format!("cannot generate with a {other} checkpoint"))),
    };
    let seed_for = |i: usize| derive_seed(st.seed, "generate", i as u64);
    let mut clips = Vec::new();
    let mut skipped = 0;
    match (&model, condition) {
        (Model::Text(m), Condition::Text) => {
            for (i, rec) in ds.data.paired_t2g.iter().enumerate() {
                if rec.frame_words.len() < frames {
                    skipped += 1;
                    continue;
                }
                clips.push(generate_from_text(m, &rec.frame_words[..frames], seed_for(i))?);
            }
        }
        (Model::Text(_), _) => {
            return Err(Failure::Usage("a t2g model only supports --condition text".into()));
        }
        (Model::Fmri(m), cond) => {
            let decoder = match cond {
                Condition::Text => Some(f2t_from_checkpoint(&load_ckpt(need(f2t, "f2t", "fMRI-to-text checkpoint")?)?)?),
                _ => None,
            };
            let fpt = fmri2ges::align::frames_per_tr(m.fps, ds.world.tr_seconds)?;
            let text = m.text_model();
            for (i, rec) in ds.data.unpaired_fmri.iter().enumerate() {
                let rows = replicate_fmri(rec.fmri.voxels(), rec.fmri.tr_seconds(), m.fps)?;
                if rows.nrows() < frames {
                    skipped += 1;
                    continue;
                }
                let window = rows.slice(s![..frames, ..]).to_owned();
                let clip = match cond {
                    Condition::Fmri => generate_from_fmri_frames(m, &window, seed_for(i))?,
                    Condition::Noise => {
                        let noise = noise_condition(&window, derive_seed(st.seed, "generate-noise", i as u64))?;
                        generate_from_fmri_frames(m, &noise, seed_for(i))?
                    }
                    Condition::Text => {
                        let dec = decoder.as_ref().expect("decoder loaded for text");
                        let decoded = dec.decode(&rec.fmri, derive_seed(st.seed, "decode", i as u64))?;
                        let groups = words_by_tr(&decoded, rec.fmri.n_tr(), rec.fmri.tr_seconds());
                        let words = frame_aligned_words(&groups, fpt)?;
                        generate_from_text(&text, &words[..frames], seed_for(i))?
                    }
                };
                clips.push(clip);
            }
        }
    }
    if let Some(l) = limit {
        clips.truncate(l);
    }
    if clips.is_empty() {
        return Err(Failure::Data(format!("no record has {frames} frames to generate from")));
    }
    let mut echo = st.echo("generate");
    echo.set("condition", format!("{condition:?}").to_lowercase());
    echo.set("frames", frames);
    gestures_to_checkpoint(&clips, &echo)?.save(out)?;
    println!("generated {} clips ({skipped} records too short), wrote {}", clips.len(), out.display());
    Ok(())
}

fn metrics_config(st: &Settings) -> Outcome<MetricsConfig> {
    let pck: String = st.get("eval.pck")?;
    let pck = match pck.split_once(':') {
        Some(("relative", v)) => PckThreshold::Relative(v.parse().map_err(|_| Failure::Data(format!("bad eval.pck {pck:?}")))?),
        Some(("absolute", v)) => PckThreshold::Absolute(v.parse().map_err(|_| Failure::Data(format!("bad eval.pck {pck:?}")))?),
        _ => return Err(Failure::Data(format!("eval.pck must be relative:R or absolute:D, got {pck:?}"))),
    };
    let features: String = st.get("eval.fgd_features")?;
    let fgd_features = match features.split_once(':') {
        None if features == "raw-frames" => FeatureMode::RawFrames,
        Some(("pca", d)) => FeatureMode::Pca(d.parse().map_err(|_| Failure::Data(format!("bad eval.fgd_features {features:?}")))?),
        _ => return Err(Failure::Data(format!("eval.fgd_features must be raw-frames or pca:D, got {features:?}"))),
    };
    Ok(MetricsConfig { pck, bc_sigma: st.get("eval.bc_sigma")?, fgd_features })
}

fn evaluate_cmd(cli: &Cli, st: &Settings, reference: &Option<PathBuf>, generated: &Option<PathBuf>) -> Outcome<()> {
    let reference = load_gestures(need(reference, "ref", "reference gestures")?)?;
    let generated = load_gestures(need(generated, "gen", "generated gestures")?)?;
    let report = evaluate(&reference, &generated, None, metrics_config(st)?)?;
    let mut kv = KeyValues::new();
    for (k, v) in report.to_key_values() {
        kv.set(&k, v);
    }
    kv.extend(&st.echo("evaluate").with_prefix("echo"));
    emit(cli, &kv)
}

fn parse_bones(text: &str) -> Outcome<Vec<(usize, usize)>> {
    text.split(',')
        .map(|b| {
            b.split_once('-')
                .and_then(|(a, c)| Some((a.trim().parse().ok()?, c.trim().parse().ok()?)))
                .ok_or_else(|| Failure::Data(format!("bad bone {b:?} in manifest")))
        })
        .collect()
}

fn render_cmd(cli: &Cli, st: &Settings, input: &Option<PathBuf>, data: &Option<PathBuf>, clip: usize, every: Option<usize>) -> Outcome<()> {
    let clips = load_gestures(need(input, "input", "gesture file")?)?;
    let out = need_out(cli)?;
    let bone_list = match data {
        Some(dir) => {
            let text = fs::read_to_string(dir.join(MANIFEST_FILE))
                .map_err(|e| Failure::Data(format!("missing input: {}: {e}", dir.join(MANIFEST_FILE).display())))?;
            parse_bones(&KeyValues::parse(&text)?.require::<String>("bones")?)?
        }
        None => bones(),
    };
    let chosen = clips
        .get(clip)
        .ok_or_else(|| Failure::Data(format!("clip {clip} requested, file holds {}", clips.len())))?;
    let cfg = RenderConfig { every: every.unwrap_or(st.get("render.every")?) };
    let svg = render_svg(chosen, &bone_list, &cfg)?;
    fs::write(out, svg).map_err(|e| Failure::Data(format!("cannot write {}: {e}", out.display())))?;
    println!("wrote {}", out.display());
    Ok(())
}

fn run(cli: &Cli) -> Outcome<()> {
    let st = Settings::load(cli)?;
    match &cli.command {
        Command::GenData { full_scale } => gen_data(cli, &st, *full_scale),
        Command::TrainT2g { data } => train_t2g_cmd(cli, &st, data),
        Command::FitF2t { data } => fit_f2t_cmd(cli, &st, data),
        Command::TrainF2g { data, t2g, f2t } => train_f2g_cmd(cli, &st, data, t2g, f2t),
        Command::DecodeText { data, f2t } => decode_text_cmd(cli, &st, data, f2t),
        Command::Generate { data, model, f2t, condition, frames, limit } => {
            generate_cmd(cli, &st, data, model, f2t, *condition, *frames, *limit)
        }
        Command::Evaluate { reference, generated } => evaluate_cmd(cli, &st, reference, generated),
        Command::Render { input, data, clip, every } => render_cmd(cli, &st, input, data, *clip, *every),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}\n\nRun `fmri2ges --help` for usage.");
            ExitCode::from(1)
        }
        Err(Failure::Data(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

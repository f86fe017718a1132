//! Phase I: supervised training of the text-conditioned gesture denoiser and
//! generation from text.

use ndarray::{s, Array2};
use rand::Rng;

use crate::align::clip_offsets;
use crate::condition::ConditionSequence;
use crate::denoiser::{adam_step, loss_and_grad, AdamConfig, AdamState, DenoiserConfig, DenoiserParams, NoiseSample};
use crate::diffusion::{sample_loop, DiffusionSchedule, GestureClip};
use crate::error::{Error, Result};
use crate::rng;
use crate::vocab::{embed_frame_text, EmbeddingTable, WordId};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScheduleConfig {
    pub steps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self { steps: 50, beta_start: 1e-4, beta_end: 0.02 }
    }
}

impl ScheduleConfig {
    pub fn build(&self) -> Result<DiffusionSchedule> {
        DiffusionSchedule::linear(self.steps, self.beta_start, self.beta_end)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct T2gConfig {
    pub denoiser: DenoiserConfig,
    pub schedule: ScheduleConfig,
    pub adam: AdamConfig,
    pub batch_size: usize,
    pub steps: usize,
    pub clip_len: usize,
    pub stride: usize,
}

impl T2gConfig {
    pub fn new(text_dim: usize) -> Self {
        Self {
            denoiser: DenoiserConfig::new(text_dim),
            schedule: ScheduleConfig::default(),
            adam: AdamConfig::default(),
            batch_size: 32,
            steps: 2000,
            clip_len: crate::align::DEFAULT_CLIP_LEN,
            stride: crate::align::DEFAULT_STRIDE,
        }
    }
}

/// One clean gesture clip with its frame-level condition.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingClip {
    pub x0: Array2<f64>,
    pub cond: Array2<f64>,
}

/// Cuts frame-aligned word/gesture sequences into embedded training clips.
pub fn text_clips<'a>(
    sequences: impl IntoIterator<Item = (&'a [WordId], &'a GestureClip)>,
    table: &EmbeddingTable,
    clip_len: usize,
    stride: usize,
) -> Result<Vec<TrainingClip>> {
    let mut out = Vec::new();
    for (words, gestures) in sequences {
        if words.len() != gestures.len() {
            return Err(Error::Shape(format!("{} words for {} frames", words.len(), gestures.len())));
        }
        let cond = embed_frame_text(words, table)?;
        for o in clip_offsets(words.len(), clip_len, stride)? {
            out.push(TrainingClip {
                x0: gestures.frames().slice(s![o..o + clip_len, ..]).to_owned(),
                cond: cond.values().slice(s![o..o + clip_len, ..]).to_owned(),
            });
        }
    }
    Ok(out)
}

/// Batch `step` of a run: clip indices, steps and noise all come from one
/// stream keyed by `(seed, label, step)`, so any trainer replaying the same
/// label sees the same batches.
pub fn sample_batch(
    clips: &[TrainingClip],
    batch_size: usize,
    sched: &DiffusionSchedule,
    seed: u64,
    label: &str,
    step: usize,
) -> Vec<NoiseSample> {
    let mut r = rng::indexed_stream(seed, label, step as u64);
    (0..batch_size)
        .map(|_| {
            let clip = &clips[r.random_range(0..clips.len())];
            let t = r.random_range(1..=sched.steps());
            let eps = rng::normal_matrix(&mut r, clip.x0.nrows(), clip.x0.ncols());
            NoiseSample { x0: clip.x0.clone(), cond: clip.cond.clone(), t, eps }
        })
        .collect()
}

pub const PAIRED_BATCH_LABEL: &str = "paired-batch";

/// Text-conditioned gesture model with the table used to embed its inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct T2gModel {
    pub params: DenoiserParams<f32>,
    pub schedule: ScheduleConfig,
    pub table: EmbeddingTable,
}

#[derive(Debug, Clone, PartialEq)]
pub struct T2gRun {
    pub model: T2gModel,
    pub loss_curve: Vec<f64>,
}

fn check_clips(clips: &[TrainingClip], cfg: &T2gConfig) -> Result<()> {
    if clips.is_empty() {
        return Err(Error::Empty("no training clips".into()));
    }
    if cfg.batch_size == 0 {
        return Err(Error::InvalidArgument("batch size must be positive".into()));
    }
    if let Some(c) = clips.iter().find(|c| c.x0.nrows() != cfg.clip_len || c.cond.nrows() != cfg.clip_len) {
        return Err(Error::Shape(format!("clip of {} frames, expected {}", c.x0.nrows(), cfg.clip_len)));
    }
    Ok(())
}

/// Runs `cfg.steps` Adam updates from `params` with fresh optimizer state.
pub fn train_from(
    mut params: DenoiserParams<f32>,
    clips: &[TrainingClip],
    cfg: &T2gConfig,
    seed: u64,
) -> Result<(DenoiserParams<f32>, Vec<f64>)> {
    check_clips(clips, cfg)?;
    if params.config.cond_width != clips[0].cond.ncols() {
        return Err(Error::Shape(format!(
            "denoiser condition width {} vs clip condition width {}",
            params.config.cond_width,
            clips[0].cond.ncols()
        )));
    }
    let sched = cfg.schedule.build()?;
    let mut adam = AdamState::new(&params, cfg.adam);
    let mut curve = Vec::with_capacity(cfg.steps);
    for step in 0..cfg.steps {
        let batch = sample_batch(clips, cfg.batch_size, &sched, seed, PAIRED_BATCH_LABEL, step);
        let lg = loss_and_grad(&params, &batch, &sched)?;
        adam_step(&mut params, &lg.grads, &mut adam)?;
        curve.push(lg.loss);
        if step % 200 == 0 {
            log::debug!("t2g step {step}: loss {:.5}", lg.loss);
        }
    }
    Ok((params, curve))
}

pub fn train_t2g(clips: &[TrainingClip], table: &EmbeddingTable, cfg: &T2gConfig, seed: u64) -> Result<T2gRun> {
    if table.dim() != cfg.denoiser.cond_width {
        return Err(Error::Shape(format!(
            "text table width {} vs denoiser condition width {}",
            table.dim(),
            cfg.denoiser.cond_width
        )));
    }
    let init = DenoiserParams::init(cfg.denoiser, rng::derive_seed(seed, "t2g-init", 0))?;
    let (params, loss_curve) = train_from(init, clips, cfg, seed)?;
    Ok(T2gRun { model: T2gModel { params, schedule: cfg.schedule, table: table.clone() }, loss_curve })
}

/// Mean ε-MSE on a fixed set of noised clips (independent of training draws).
pub fn eval_eps_mse(
    params: &DenoiserParams<f32>,
    clips: &[TrainingClip],
    sched: &DiffusionSchedule,
    draws: usize,
    seed: u64,
) -> Result<f64> {
    if clips.is_empty() {
        return Err(Error::Empty("no evaluation clips".into()));
    }
    let batch: Vec<NoiseSample> =
        (0..draws).flat_map(|d| sample_batch(clips, clips.len(), sched, seed, "eval-batch", d)).collect();
    Ok(loss_and_grad(params, &batch, sched)?.loss)
}

/// Embeds frame-aligned words and runs the reverse chain.
pub fn generate_from_text(model: &T2gModel, words: &[WordId], seed: u64) -> Result<GestureClip> {
    let cond = embed_frame_text(words, &model.table)?;
    sample_loop(&model.params, &cond, &model.schedule.build()?, seed)
}

/// Reverse chain for an already-embedded condition.
pub fn generate(params: &DenoiserParams<f32>, cond: &ConditionSequence, sched: &DiffusionSchedule, seed: u64) -> Result<GestureClip> {
    sample_loop(params, cond, sched, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthdata::{make_t2g_record, World, WorldConfig};

    fn tiny_cfg(text_dim: usize) -> T2gConfig {
        T2gConfig {
            denoiser: DenoiserConfig::new(text_dim).with_model(16, 1),
            schedule: ScheduleConfig { steps: 5, ..ScheduleConfig::default() },
            batch_size: 4,
            steps: 6,
            clip_len: 16,
            stride: 8,
            adam: AdamConfig::default(),
        }
    }

    fn setup() -> (World, Vec<TrainingClip>) {
        let world = World::new(WorldConfig { text_dim: 8, ..WorldConfig::default() }).unwrap();
        let recs: Vec<_> = (0..2).map(|i| make_t2g_record(&world, 4, i).unwrap()).collect();
        let clips =
            text_clips(recs.iter().map(|r| (&r.frame_words[..], &r.gestures)), &world.text_table, 16, 8).unwrap();
        (world, clips)
    }

    #[test]
    fn clips_cover_records() {
        let (_, clips) = setup();
        // 4 words at 2 per TR → 60 frames → offsets 0, 8, .., 40.
        assert_eq!(clips.len(), 12);
        assert!(clips.iter().all(|c| c.x0.dim() == (16, 98) && c.cond.dim() == (16, 8)));
    }

    #[test]
    fn zero_lr_keeps_parameters() {
        let (world, clips) = setup();
        let mut cfg = tiny_cfg(8);
        cfg.adam.lr = 0.0;
        let run = train_t2g(&clips, &world.text_table, &cfg, 3).unwrap();
        let init = DenoiserParams::<f32>::init(cfg.denoiser, rng::derive_seed(3, "t2g-init", 0)).unwrap();
        assert_eq!(run.model.params, init);
        assert_eq!(run.loss_curve.len(), 6);
    }

    #[test]
    fn same_seed_same_model() {
        let (world, clips) = setup();
        let cfg = tiny_cfg(8);
        let a = train_t2g(&clips, &world.text_table, &cfg, 3).unwrap();
        let b = train_t2g(&clips, &world.text_table, &cfg, 3).unwrap();
        assert_eq!(a, b);
        let c = train_t2g(&clips, &world.text_table, &cfg, 4).unwrap();
        assert_ne!(a.model.params, c.model.params);
    }

    #[test]
    fn bad_inputs() {
        let (world, clips) = setup();
        let cfg = tiny_cfg(8);
        assert!(matches!(train_t2g(&[], &world.text_table, &cfg, 0), Err(Error::Empty(_))));
        let wrong = T2gConfig { clip_len: 32, ..cfg.clone() };
        assert!(train_t2g(&clips, &world.text_table, &wrong, 0).is_err());
        let narrow = T2gConfig { denoiser: DenoiserConfig::new(5).with_model(16, 1), ..cfg };
        assert!(train_t2g(&clips, &world.text_table, &narrow, 0).is_err());
    }

    #[test]
    fn generation_contract() {
        let (world, clips) = setup();
        let run = train_t2g(&clips, &world.text_table, &tiny_cfg(8), 3).unwrap();
        let words = vec![1, 1, 2, 2, 3, 3, 4, 4];
        let a = generate_from_text(&run.model, &words, 9).unwrap();
        assert_eq!(a.frames().dim(), (8, 98));
        assert!(a.frames().iter().all(|v| v.is_finite()));
        assert_eq!(a, generate_from_text(&run.model, &words, 9).unwrap());
        assert_ne!(a, generate_from_text(&run.model, &[5, 5, 6, 6, 7, 7, 8, 8], 9).unwrap());
        assert!(matches!(generate_from_text(&run.model, &[500], 9), Err(Error::UnknownWord(500))));
    }
}

//! Phase II: the fMRI-conditioned denoiser is trained to agree with the
//! text-conditioned one on pseudo-labelled fMRI, while the text model keeps
//! fitting its paired data. Generation at inference needs only the fMRI model.

use std::fmt;
use std::str::FromStr;

use ndarray::{s, Array2, Axis};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::align::{clip_offsets, frame_aligned_words, frames_per_tr, replicate_fmri, DEFAULT_FPS};
use crate::condition::{ConditionSequence, Modality};
use crate::denoiser::{
    adam_step, cast_matrix, loss_and_grad, AdamConfig, AdamState, DenoiserConfig, DenoiserParams, NoiseSample,
    Real,
};
use crate::diffusion::{q_sample, sample_loop, sample_loop_visit, DiffusionSchedule, GestureClip};
use crate::error::{Error, Result};
use crate::f2t::{F2tDecoder, FmriRecord, LanguagePrior};
use crate::rng;
use crate::t2g::{generate_from_text, sample_batch, ScheduleConfig, T2gModel, TrainingClip, PAIRED_BATCH_LABEL};
use crate::vocab::{embed_frame_text, words_by_tr, EmbeddingTable, WordId, SILENCE};

/// How the alignment term is weighted by the noise level of its step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Weighting {
    /// `sqrt((1 - ᾱ_t) / ᾱ_t)`
    PaperSqrt,
    /// `(1 - ᾱ_t) / ᾱ_t`, which makes the term equal the x₀-space squared error.
    Exact,
}

impl Weighting {
    pub fn weight(self, alpha_bar: f64) -> f64 {
        let ratio = (1.0 - alpha_bar) / alpha_bar;
        match self {
            Weighting::PaperSqrt => ratio.sqrt(),
            Weighting::Exact => ratio,
        }
    }
}

impl fmt::Display for Weighting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Weighting::PaperSqrt => "paper-sqrt",
            Weighting::Exact => "exact",
        })
    }
}

impl FromStr for Weighting {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper-sqrt" => Ok(Weighting::PaperSqrt),
            "exact" => Ok(Weighting::Exact),
            other => Err(Error::InvalidArgument(format!("unknown weighting mode {other:?}"))),
        }
    }
}

/// Where the noisy pseudo input `x_t′` comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PseudoMode {
    /// Re-noise the cached pseudo gesture with `q_sample` at each drawn step.
    Renoise,
    /// Use the state the text model's reverse chain passed through at that step.
    ChainIntermediate,
}

impl fmt::Display for PseudoMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PseudoMode::Renoise => "renoise",
            PseudoMode::ChainIntermediate => "chain-intermediate",
        })
    }
}

impl FromStr for PseudoMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "renoise" => Ok(PseudoMode::Renoise),
            "chain-intermediate" => Ok(PseudoMode::ChainIntermediate),
            other => Err(Error::InvalidArgument(format!("unknown pseudo mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DualConfig {
    pub lambda: f64,
    pub weighting: Weighting,
    pub pseudo_mode: PseudoMode,
    pub steps: usize,
    /// Keep the text model fixed and train only the fMRI model.
    pub freeze_text: bool,
    pub batch_size: usize,
    pub align_batch_size: usize,
    pub adam: AdamConfig,
    pub fmri_denoiser: DenoiserConfig,
    pub clip_len: usize,
    pub stride: usize,
    pub fps: f64,
}

impl DualConfig {
    pub fn new(voxels: usize) -> Self {
        Self {
            lambda: 0.01,
            weighting: Weighting::PaperSqrt,
            pseudo_mode: PseudoMode::Renoise,
            steps: 2000,
            freeze_text: false,
            batch_size: 32,
            align_batch_size: 32,
            adam: AdamConfig::default(),
            fmri_denoiser: DenoiserConfig::new(voxels),
            clip_len: crate::align::DEFAULT_CLIP_LEN,
            stride: crate::align::DEFAULT_STRIDE,
            fps: DEFAULT_FPS,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(Error::InvalidArgument(format!("lambda must be finite and >= 0, got {}", self.lambda)));
        }
        if self.align_batch_size == 0 || (self.batch_size == 0 && !self.freeze_text) {
            return Err(Error::InvalidArgument("batch sizes must be positive".into()));
        }
        if self.clip_len == 0 || self.stride == 0 {
            return Err(Error::InvalidArgument("clip length and stride must be positive".into()));
        }
        if !(self.fps.is_finite() && self.fps > 0.0) {
            return Err(Error::InvalidArgument(format!("fps must be positive, got {}", self.fps)));
        }
        self.fmri_denoiser.validate()
    }
}

/// One clip of decoded words, the gesture the text model generated for them
/// and the fMRI frames they were decoded from.
#[derive(Debug, Clone, PartialEq)]
pub struct PseudoPair {
    pub words: Vec<WordId>,
    pub gesture: GestureClip,
    pub fmri: Array2<f64>,
    /// Seed of the reverse chain that produced `gesture`.
    pub seed: u64,
    /// `trajectory[t - 1]` is the chain state `x_t`; kept only in
    /// chain-intermediate mode.
    pub trajectory: Option<Vec<Array2<f64>>>,
}

impl PseudoPair {
    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn regenerate(&self, t2g: &T2gModel) -> Result<GestureClip> {
        generate_from_text(t2g, &self.words, self.seed)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PseudoPool {
    pub pairs: Vec<PseudoPair>,
    /// Clips dropped because nothing was decoded in them.
    pub skipped: usize,
}

fn check_vocab(prior: &dyn LanguagePrior, table: &EmbeddingTable) -> Result<()> {
    if prior.vocab_size() != table.vocab_size() {
        return Err(Error::Shape(format!(
            "decoder vocabulary {} vs text model vocabulary {}",
            prior.vocab_size(),
            table.vocab_size()
        )));
    }
    Ok(())
}

/// Decodes `fmri`, cuts it into clips and runs the text model's reverse chain
/// once per clip.
pub fn make_pseudo(
    decoder: &F2tDecoder,
    t2g: &T2gModel,
    fmri: &FmriRecord,
    cfg: &DualConfig,
    seed: u64,
) -> Result<PseudoPool> {
    check_vocab(&decoder.prior, &t2g.table)?;
    let sched = t2g.schedule.build()?;
    let decoded = decoder.decode(fmri, rng::derive_seed(seed, "pseudo-decode", 0))?;
    let n = frames_per_tr(cfg.fps, fmri.tr_seconds())?;
    let groups = words_by_tr(&decoded, fmri.n_tr(), fmri.tr_seconds());
    let words = frame_aligned_words(&groups, n)?;
    let frames = replicate_fmri(fmri.voxels(), fmri.tr_seconds(), cfg.fps)?;
    let mut pool = PseudoPool::default();
    for (k, o) in clip_offsets(words.len(), cfg.clip_len, cfg.stride)?.into_iter().enumerate() {
        let clip_words = &words[o..o + cfg.clip_len];
        if clip_words.iter().all(|&w| w == SILENCE) {
            pool.skipped += 1;
            continue;
        }
        let clip_seed = rng::derive_seed(seed, "pseudo-clip", k as u64);
        let cond = embed_frame_text(clip_words, &t2g.table)?;
        let mut trajectory = Vec::new();
        let keep = cfg.pseudo_mode == PseudoMode::ChainIntermediate;
        let gesture = sample_loop_visit(&t2g.params, &cond, &sched, clip_seed, |_, x| {
            if keep {
                trajectory.push(x.clone());
            }
        })?;
        trajectory.reverse();
        pool.pairs.push(PseudoPair {
            words: clip_words.to_vec(),
            gesture,
            fmri: frames.slice(s![o..o + cfg.clip_len, ..]).to_owned(),
            seed: clip_seed,
            trajectory: keep.then_some(trajectory),
        });
    }
    Ok(pool)
}

/// [`make_pseudo`] over many records in parallel, concatenated in input order.
pub fn build_pseudo_pool(
    decoder: &F2tDecoder,
    t2g: &T2gModel,
    records: &[FmriRecord],
    cfg: &DualConfig,
    seed: u64,
) -> Result<PseudoPool> {
    let pools: Vec<PseudoPool> = records
        .par_iter()
        .enumerate()
        .map(|(i, r)| make_pseudo(decoder, t2g, r, cfg, rng::derive_seed(seed, "pseudo-record", i as u64)))
        .collect::<Result<_>>()?;
    let mut out = PseudoPool::default();
    for p in pools {
        out.pairs.extend(p.pairs);
        out.skipped += p.skipped;
    }
    Ok(out)
}

/// One alignment example: the same noisy pseudo input seen under both conditions.
#[derive(Debug, Clone)]
pub struct AlignmentSample {
    pub x_t: Array2<f64>,
    pub t: usize,
    pub text_cond: Array2<f64>,
    pub fmri_cond: Array2<f64>,
}

pub struct DualLoss<T> {
    pub total: f64,
    pub paired: f64,
    /// Weighted alignment term, λ included.
    pub alignment: f64,
    pub grads_text: DenoiserParams<T>,
    pub grads_fmri: DenoiserParams<T>,
}

/// Paired ε-MSE of the text model plus `λ·w(t)·mean((ε_x - ε_f)²)` averaged
/// over the alignment batch. The text model receives gradients from both
/// terms, the fMRI model from the alignment term only. With `λ = 0` the
/// alignment batch is not evaluated at all.
pub fn dual_loss<T: Real>(
    theta_x: &DenoiserParams<T>,
    theta_f: &DenoiserParams<T>,
    paired: &[NoiseSample],
    align: &[AlignmentSample],
    lambda: f64,
    weighting: Weighting,
    sched: &DiffusionSchedule,
) -> Result<DualLoss<T>> {
    let (paired_loss, mut grads_text) = if paired.is_empty() {
        (0.0, theta_x.zeros_like())
    } else {
        let lg = loss_and_grad(theta_x, paired, sched)?;
        (lg.loss, lg.grads)
    };
    let mut grads_fmri = theta_f.zeros_like();
    let mut alignment = 0.0;
    if lambda > 0.0 && !align.is_empty() {
        let batch = align.len() as f64;
        let parts: Vec<(f64, DenoiserParams<T>, DenoiserParams<T>)> = align
            .par_iter()
            .map(|a| {
                sched.check_step(a.t)?;
                let rows = a.x_t.nrows();
                if a.text_cond.nrows() != rows || a.fmri_cond.nrows() != rows {
                    return Err(Error::Shape(format!(
                        "alignment tracks of {rows}, {} and {} frames",
                        a.text_cond.nrows(),
                        a.fmri_cond.nrows()
                    )));
                }
                let x: Array2<T> = cast_matrix(&a.x_t);
                let cx: Array2<T> = cast_matrix(&a.text_cond);
                let cf: Array2<T> = cast_matrix(&a.fmri_cond);
                let (px, cache_x) = theta_x.forward_cached(x.view(), a.t, cx.view())?;
                let (pf, cache_f) = theta_f.forward_cached(x.view(), a.t, cf.view())?;
                let coef = lambda * weighting.weight(sched.alpha_bar(a.t)) / (batch * px.len() as f64);
                let mut sq = 0.0;
                let mut d = Array2::<T>::zeros(px.dim());
                for ((g, p), q) in d.iter_mut().zip(px.iter()).zip(pf.iter()) {
                    let diff = p.as_f64() - q.as_f64();
                    sq += diff * diff;
                    *g = T::of_f64(2.0 * coef * diff);
                }
                let gx = theta_x.backward(&cache_x, &d);
                d.mapv_inplace(|v| -v);
                let gf = theta_f.backward(&cache_f, &d);
                Ok((coef * sq, gx, gf))
            })
            .collect::<Result<_>>()?;
        for (l, gx, gf) in parts {
            alignment += l;
            grads_text.add_scaled(&gx, T::one());
            grads_fmri.add_scaled(&gf, T::one());
        }
    }
    let total = paired_loss + alignment;
    if !total.is_finite() {
        return Err(Error::NonFinite("dual loss".into()));
    }
    Ok(DualLoss { total, paired: paired_loss, alignment, grads_text, grads_fmri })
}

/// Alignment batch `step`: pair choice, step and noise from one stream keyed
/// by `(seed, step)`.
pub fn alignment_batch(
    pool: &PseudoPool,
    table: &EmbeddingTable,
    batch_size: usize,
    mode: PseudoMode,
    sched: &DiffusionSchedule,
    seed: u64,
    step: usize,
) -> Result<Vec<AlignmentSample>> {
    if pool.pairs.is_empty() {
        return Err(Error::Empty("no pseudo pairs".into()));
    }
    let mut r = rng::indexed_stream(seed, "alignment-batch", step as u64);
    (0..batch_size)
        .map(|_| {
            let pair = &pool.pairs[r.random_range(0..pool.pairs.len())];
            let t = r.random_range(1..=sched.steps());
            let x_t = match mode {
                PseudoMode::Renoise => {
                    let frames = pair.gesture.frames();
                    let eps = rng::normal_matrix(&mut r, frames.nrows(), frames.ncols());
                    q_sample(frames.view(), t, eps.view(), sched)?
                }
                PseudoMode::ChainIntermediate => pair
                    .trajectory
                    .as_ref()
                    .and_then(|tr| tr.get(t - 1))
                    .cloned()
                    .ok_or_else(|| Error::Missing(format!("chain state for step {t}")))?,
            };
            Ok(AlignmentSample {
                x_t,
                t,
                text_cond: embed_frame_text(&pair.words, table)?.values().clone(),
                fmri_cond: pair.fmri.clone(),
            })
        })
        .collect()
}

/// Both denoisers after phase II, plus what is needed to run them.
#[derive(Debug, Clone, PartialEq)]
pub struct F2gCheckpoint {
    pub text: DenoiserParams<f32>,
    pub fmri: DenoiserParams<f32>,
    pub schedule: ScheduleConfig,
    pub table: EmbeddingTable,
    pub clip_len: usize,
    pub fps: f64,
}

impl F2gCheckpoint {
    pub fn text_model(&self) -> T2gModel {
        T2gModel { params: self.text.clone(), schedule: self.schedule, table: self.table.clone() }
    }

    pub fn voxels(&self) -> usize {
        self.fmri.config.cond_width
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct F2gRun {
    pub checkpoint: F2gCheckpoint,
    pub paired_curve: Vec<f64>,
    pub alignment_curve: Vec<f64>,
    pub skipped: usize,
}

/// Phase II from a trained text model and a prepared pseudo pool. The paired
/// batches replay the phase-I stream, so with `λ = 0` the text model follows
/// exactly the trajectory continued phase-I training would.
pub fn train_dual(
    t2g: &T2gModel,
    paired: &[TrainingClip],
    pool: &PseudoPool,
    cfg: &DualConfig,
    seed: u64,
) -> Result<F2gRun> {
    cfg.validate()?;
    if pool.pairs.is_empty() {
        return Err(Error::Empty("unpaired fMRI produced no pseudo pairs".into()));
    }
    if paired.is_empty() && !cfg.freeze_text {
        return Err(Error::Empty("no paired clips".into()));
    }
    let width = pool.pairs[0].fmri.ncols();
    if width != cfg.fmri_denoiser.cond_width {
        return Err(Error::Shape(format!(
            "fMRI denoiser condition width {} vs {width} voxels",
            cfg.fmri_denoiser.cond_width
        )));
    }
    let sched = t2g.schedule.build()?;
    let mut theta_x = t2g.params.clone();
    let mut theta_f = DenoiserParams::<f32>::init(cfg.fmri_denoiser, rng::derive_seed(seed, "f2g-init", 0))?;
    let mut adam_x = AdamState::new(&theta_x, cfg.adam);
    let mut adam_f = AdamState::new(&theta_f, cfg.adam);
    let mut paired_curve = Vec::with_capacity(cfg.steps);
    let mut alignment_curve = Vec::with_capacity(cfg.steps);
    for step in 0..cfg.steps {
        let batch = if cfg.freeze_text {
            Vec::new()
        } else {
            sample_batch(paired, cfg.batch_size, &sched, seed, PAIRED_BATCH_LABEL, step)
        };
        let align = if cfg.lambda > 0.0 {
            alignment_batch(pool, &t2g.table, cfg.align_batch_size, cfg.pseudo_mode, &sched, seed, step)?
        } else {
            Vec::new()
        };
        let dl = dual_loss(&theta_x, &theta_f, &batch, &align, cfg.lambda, cfg.weighting, &sched)?;
        if !cfg.freeze_text {
            adam_step(&mut theta_x, &dl.grads_text, &mut adam_x)?;
        }
        if cfg.lambda > 0.0 {
            adam_step(&mut theta_f, &dl.grads_fmri, &mut adam_f)?;
        }
        paired_curve.push(dl.paired);
        alignment_curve.push(dl.alignment);
        if step % 200 == 0 {
            log::debug!("f2g step {step}: paired {:.5} alignment {:.6}", dl.paired, dl.alignment);
        }
    }
    Ok(F2gRun {
        checkpoint: F2gCheckpoint {
            text: theta_x,
            fmri: theta_f,
            schedule: t2g.schedule,
            table: t2g.table.clone(),
            clip_len: cfg.clip_len,
            fps: cfg.fps,
        },
        paired_curve,
        alignment_curve,
        skipped: pool.skipped,
    })
}

/// Full phase II: builds the pseudo pool from `unpaired`, then trains.
pub fn train_f2g(
    t2g: &T2gModel,
    decoder: &F2tDecoder,
    paired: &[TrainingClip],
    unpaired: &[FmriRecord],
    cfg: &DualConfig,
    seed: u64,
) -> Result<F2gRun> {
    cfg.validate()?;
    if unpaired.is_empty() {
        return Err(Error::Empty("no unpaired fMRI records".into()));
    }
    let pool = build_pseudo_pool(decoder, t2g, unpaired, cfg, rng::derive_seed(seed, "pseudo", 0))?;
    train_dual(t2g, paired, &pool, cfg, seed)
}

/// Generates gestures for frame-rate fMRI rows, one `clip_len` window at a
/// time so no window is longer than what the model was trained on.
pub fn generate_from_fmri_frames(ckpt: &F2gCheckpoint, frames: &Array2<f64>, seed: u64) -> Result<GestureClip> {
    if frames.ncols() != ckpt.voxels() {
        return Err(Error::Shape(format!("{} voxels, checkpoint expects {}", frames.ncols(), ckpt.voxels())));
    }
    if frames.nrows() == 0 || ckpt.clip_len == 0 {
        return Err(Error::Empty("fMRI frames".into()));
    }
    let sched = ckpt.schedule.build()?;
    let windows: Vec<GestureClip> = (0..frames.nrows())
        .step_by(ckpt.clip_len)
        .enumerate()
        .map(|(k, o)| {
            let end = (o + ckpt.clip_len).min(frames.nrows());
            let cond = ConditionSequence::new(frames.slice(s![o..end, ..]).to_owned(), Modality::Fmri)?;
            sample_loop(&ckpt.fmri, &cond, &sched, rng::derive_seed(seed, "f2g-window", k as u64))
        })
        .collect::<Result<_>>()?;
    let views: Vec<_> = windows.iter().map(|w| w.frames().view()).collect();
    let joined = ndarray::concatenate(Axis(0), &views).map_err(|e| Error::Shape(e.to_string()))?;
    GestureClip::new(joined)
}

pub fn generate_from_fmri(ckpt: &F2gCheckpoint, fmri: &FmriRecord, seed: u64) -> Result<GestureClip> {
    if fmri.n_voxels() != ckpt.voxels() {
        return Err(Error::Shape(format!("{} voxels, checkpoint expects {}", fmri.n_voxels(), ckpt.voxels())));
    }
    let frames = replicate_fmri(fmri.voxels(), fmri.tr_seconds(), ckpt.fps)?;
    generate_from_fmri_frames(ckpt, &frames, seed)
}

/// Gaussian stand-in for an fMRI condition with the same per-voxel mean and
/// standard deviation but no relation to the stimulus.
pub fn noise_condition(frames: &Array2<f64>, seed: u64) -> Result<Array2<f64>> {
    if frames.nrows() == 0 {
        return Err(Error::Empty("fMRI frames".into()));
    }
    let mean = frames.mean_axis(Axis(0)).expect("non-empty");
    let std = frames.std_axis(Axis(0), 0.0);
    let mut r = rng::stream(seed, "noise-condition");
    Ok(Array2::from_shape_fn(frames.dim(), |(_, j)| mean[j] + std[j] * r.sample::<f64, _>(StandardNormal)))
}

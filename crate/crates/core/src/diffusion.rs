//! Variance schedule and the closed-form diffusion operations: forward
//! noising, DDIM x0 recovery, the ancestral reverse step and the sampling
//! loop. All math here is f64.

use ndarray::{Array2, ArrayView2, Zip};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::condition::ConditionSequence;
use crate::error::{ensure_finite, Error, Result};
use crate::rng;
use crate::skeleton::FRAME_WIDTH;

/// Linear β schedule with derived α, ᾱ and the fixed reverse variance σ² = β.
///
/// Steps are addressed 1-based (`1..=steps()`).
#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionSchedule {
    betas: Vec<f64>,
    alphas: Vec<f64>,
    alpha_bars: Vec<f64>,
    sigma_sq: Vec<f64>,
}

impl DiffusionSchedule {
    pub fn linear(steps: usize, beta_start: f64, beta_end: f64) -> Result<Self> {
        if steps == 0 {
            return Err(Error::InvalidArgument("schedule needs at least one step".into()));
        }
        if !(beta_start.is_finite() && beta_end.is_finite()) {
            return Err(Error::NonFinite("beta endpoints".into()));
        }
        if !(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "need 0 < beta_start <= beta_end < 1, got [{beta_start}, {beta_end}]"
            )));
        }
        let betas = (0..steps)
            .map(|i| {
                if steps == 1 {
                    beta_start
                } else {
                    beta_start + (beta_end - beta_start) * i as f64 / (steps - 1) as f64
                }
            })
            .collect();
        Self::from_betas(betas)
    }

    pub fn from_betas(betas: Vec<f64>) -> Result<Self> {
        if betas.is_empty() {
            return Err(Error::InvalidArgument("schedule needs at least one step".into()));
        }
        if let Some(b) = betas.iter().find(|b| !(b.is_finite() && **b > 0.0 && **b < 1.0)) {
            return Err(Error::InvalidArgument(format!("beta {b} outside (0, 1)")));
        }
        let alphas: Vec<f64> = betas.iter().map(|b| 1.0 - b).collect();
        let alpha_bars = alphas
            .iter()
            .scan(1.0, |acc, a| {
                *acc *= a;
                Some(*acc)
            })
            .collect();
        let sigma_sq = betas.clone();
        Ok(Self { betas, alphas, alpha_bars, sigma_sq })
    }

    pub fn steps(&self) -> usize {
        self.betas.len()
    }

    pub fn check_step(&self, t: usize) -> Result<()> {
        if t == 0 || t > self.steps() {
            Err(Error::StepOutOfRange { t, steps: self.steps() })
        } else {
            Ok(())
        }
    }

    pub fn beta(&self, t: usize) -> f64 {
        self.betas[t - 1]
    }

    pub fn alpha(&self, t: usize) -> f64 {
        self.alphas[t - 1]
    }

    pub fn alpha_bar(&self, t: usize) -> f64 {
        self.alpha_bars[t - 1]
    }

    pub fn sigma_sq(&self, t: usize) -> f64 {
        self.sigma_sq[t - 1]
    }

    pub fn betas(&self) -> &[f64] {
        &self.betas
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }

    pub fn alpha_bars(&self) -> &[f64] {
        &self.alpha_bars
    }
}

/// A clip of gesture frames, `N x 98` normalized keypoint coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct GestureClip {
    frames: Array2<f64>,
}

impl GestureClip {
    pub fn new(frames: Array2<f64>) -> Result<Self> {
        if frames.ncols() != FRAME_WIDTH {
            return Err(Error::Shape(format!(
                "gesture frames must be {FRAME_WIDTH} wide, got {}",
                frames.ncols()
            )));
        }
        if frames.nrows() == 0 {
            return Err(Error::Empty("gesture clip has no frames".into()));
        }
        ensure_finite(frames.iter(), "gesture clip")?;
        Ok(Self { frames })
    }

    pub fn frames(&self) -> &Array2<f64> {
        &self.frames
    }

    pub fn into_frames(self) -> Array2<f64> {
        self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.nrows() == 0
    }
}

fn same_shape(a: &ArrayView2<f64>, b: &ArrayView2<f64>, what: &str) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::Shape(format!("{what}: {:?} vs {:?}", a.dim(), b.dim())));
    }
    Ok(())
}

/// Draws `x_t ~ q(x_t | x_0)` given the noise explicitly.
pub fn q_sample(
    x0: ArrayView2<f64>,
    t: usize,
    eps: ArrayView2<f64>,
    sched: &DiffusionSchedule,
) -> Result<Array2<f64>> {
    sched.check_step(t)?;
    same_shape(&x0, &eps, "q_sample noise")?;
    let ab = sched.alpha_bar(t);
    let (signal, noise) = (ab.sqrt(), (1.0 - ab).sqrt());
    Ok(Zip::from(&x0).and(&eps).map_collect(|x, e| signal * x + noise * e))
}

/// Recovers x0 from x_t and a noise estimate (the DDIM x0 predictor).
pub fn ddim_predict_x0(
    x_t: ArrayView2<f64>,
    eps_hat: ArrayView2<f64>,
    t: usize,
    sched: &DiffusionSchedule,
) -> Result<Array2<f64>> {
    sched.check_step(t)?;
    same_shape(&x_t, &eps_hat, "ddim_predict_x0 noise estimate")?;
    let ab = sched.alpha_bar(t);
    if ab <= 0.0 {
        return Err(Error::InvalidArgument(format!("alpha_bar({t}) = {ab} is not positive")));
    }
    let (root, noise) = (ab.sqrt(), (1.0 - ab).sqrt());
    Ok(Zip::from(&x_t).and(&eps_hat).map_collect(|x, e| x / root - noise * e / root))
}

/// One reverse transition `x_t -> x_{t-1}` with the ε-parameterized mean and
/// fixed variance σ_t² = β_t. `noise` must be zero at `t == 1`.
pub fn ancestral_step(
    x_t: ArrayView2<f64>,
    eps_hat: ArrayView2<f64>,
    t: usize,
    noise: ArrayView2<f64>,
    sched: &DiffusionSchedule,
) -> Result<Array2<f64>> {
    sched.check_step(t)?;
    same_shape(&x_t, &eps_hat, "ancestral_step noise estimate")?;
    same_shape(&x_t, &noise, "ancestral_step noise")?;
    if t == 1 && noise.iter().any(|v| *v != 0.0) {
        return Err(Error::InvalidArgument("final reverse step must not add noise".into()));
    }
    let inv_root_alpha = 1.0 / sched.alpha(t).sqrt();
    let coef = sched.beta(t) / (1.0 - sched.alpha_bar(t)).sqrt();
    let sigma = sched.sigma_sq(t).sqrt();
    Ok(Zip::from(&x_t)
        .and(&eps_hat)
        .and(&noise)
        .map_collect(|x, e, z| inv_root_alpha * (x - coef * e) + sigma * z))
}

/// Anything that predicts the noise component of `x_t` under a condition.
pub trait NoisePredictor {
    /// Width of the condition rows this predictor accepts.
    fn condition_width(&self) -> usize;

    fn predict_noise(
        &self,
        x_t: &Array2<f64>,
        t: usize,
        cond: &ConditionSequence,
    ) -> Result<Array2<f64>>;
}

/// Full ancestral sampling chain from `x_T ~ N(0, I)` down to `x_0`.
///
/// Random draws are consumed in a fixed order: `x_T` row-major, then one
/// noise matrix per step for `t = T..=2`.
pub fn sample_loop<P: NoisePredictor + ?Sized>(
    denoiser: &P,
    cond: &ConditionSequence,
    sched: &DiffusionSchedule,
    seed: u64,
) -> Result<GestureClip> {
    sample_loop_visit(denoiser, cond, sched, seed, |_, _| {})
}

/// [`sample_loop`] that shows `visit(t, x_t)` every state before it is denoised.
pub fn sample_loop_visit<P: NoisePredictor + ?Sized>(
    denoiser: &P,
    cond: &ConditionSequence,
    sched: &DiffusionSchedule,
    seed: u64,
    mut visit: impl FnMut(usize, &Array2<f64>),
) -> Result<GestureClip> {
    if denoiser.condition_width() != cond.width() {
        return Err(Error::Shape(format!(
            "denoiser expects condition width {}, got {}",
            denoiser.condition_width(),
            cond.width()
        )));
    }
    let mut rng = rng::stream(seed, "sample-loop");
    let frames = cond.len();
    let mut x = rng::normal_matrix(&mut rng, frames, FRAME_WIDTH);
    for t in (1..=sched.steps()).rev() {
        visit(t, &x);
        let eps_hat = denoiser.predict_noise(&x, t, cond)?;
        if eps_hat.dim() != x.dim() {
            return Err(Error::Shape(format!(
                "denoiser returned {:?}, expected {:?}",
                eps_hat.dim(),
                x.dim()
            )));
        }
        let noise = if t > 1 {
            Array2::from_shape_simple_fn(x.dim(), || rng.sample::<f64, _>(StandardNormal))
        } else {
            Array2::zeros(x.dim())
        };
        x = ancestral_step(x.view(), eps_hat.view(), t, noise.view(), sched)?;
    }
    GestureClip::new(x)
}

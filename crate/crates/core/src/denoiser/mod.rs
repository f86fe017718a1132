//! Conditional noise-prediction network ε_θ(x_t, t, c).
//!
//! Each residual block applies a width-3 temporal convolution, cross-attention
//! from the gesture hidden state onto the projected condition, and a
//! frame-wise MLP. Gradients are hand-derived reverse mode; the network is
//! generic over `f32` (training) and `f64` (gradient checks).

mod adam;
mod attention;
mod network;

use std::fmt::Debug;

use ndarray::{Array2, ScalarOperand};
use num_traits::Float;
use rand::Rng;
use rand_distr::StandardNormal;

pub use self::adam::{adam_step, adam_update, AdamConfig, AdamState};
pub use self::attention::{cross_attention, sinusoidal_embed, AttentionOutput, AttentionWeights};
pub use self::network::{loss_and_grad, ForwardCache, LossAndGrad, NoiseSample};
pub use crate::condition::{ConditionSequence, Modality};

use crate::error::{Error, Result};
use crate::rng;
use crate::skeleton::FRAME_WIDTH;

/// Floating point type the network can run in.
pub trait Real:
    Float
    + ndarray::LinalgScalar
    + ScalarOperand
    + Debug
    + Default
    + Send
    + Sync
    + std::iter::Sum
    + std::ops::AddAssign
    + std::ops::SubAssign
    + std::ops::MulAssign
    + 'static
{
    fn of_f64(v: f64) -> Self;
    fn as_f64(self) -> f64;
}

impl Real for f32 {
    fn of_f64(v: f64) -> Self {
        v as f32
    }
    fn as_f64(self) -> f64 {
        f64::from(self)
    }
}

impl Real for f64 {
    fn of_f64(v: f64) -> Self {
        v
    }
    fn as_f64(self) -> f64 {
        self
    }
}

pub(crate) fn cast_matrix<A: Real, B: Real>(m: &Array2<A>) -> Array2<B> {
    m.mapv(|v| B::of_f64(v.as_f64()))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DenoiserConfig {
    pub data_width: usize,
    pub cond_width: usize,
    pub d_model: usize,
    pub blocks: usize,
    pub init_std: f64,
}

impl DenoiserConfig {
    pub fn new(cond_width: usize) -> Self {
        Self { data_width: FRAME_WIDTH, cond_width, d_model: 64, blocks: 2, init_std: 0.02 }
    }

    pub fn with_model(mut self, d_model: usize, blocks: usize) -> Self {
        self.d_model = d_model;
        self.blocks = blocks;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.d_model == 0 || self.d_model % 2 != 0 {
            return Err(Error::InvalidArgument(format!(
                "d_model must be even and positive, got {}",
                self.d_model
            )));
        }
        if self.cond_width == 0 || self.data_width == 0 {
            return Err(Error::InvalidArgument("zero-width denoiser input".into()));
        }
        if !(self.init_std.is_finite() && self.init_std >= 0.0) {
            return Err(Error::InvalidArgument("init_std must be finite and >= 0".into()));
        }
        Ok(())
    }
}

pub const CONV_TAPS: usize = 3;
pub const FFN_MULT: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct BlockParams<T> {
    pub conv_w: Vec<Array2<T>>,
    pub conv_b: Array2<T>,
    pub cond_w: Array2<T>,
    pub cond_b: Array2<T>,
    pub wq: Array2<T>,
    pub wk: Array2<T>,
    pub wv: Array2<T>,
    pub wo: Array2<T>,
    pub bo: Array2<T>,
    pub ff_w1: Array2<T>,
    pub ff_b1: Array2<T>,
    pub ff_w2: Array2<T>,
    pub ff_b2: Array2<T>,
}

/// All trainable weights. The same struct doubles as the gradient and Adam
/// moment container.
#[derive(Debug, Clone, PartialEq)]
pub struct DenoiserParams<T> {
    pub config: DenoiserConfig,
    pub in_w: Array2<T>,
    pub in_b: Array2<T>,
    pub time_w1: Array2<T>,
    pub time_b1: Array2<T>,
    pub time_w2: Array2<T>,
    pub time_b2: Array2<T>,
    pub blocks: Vec<BlockParams<T>>,
    pub out_w: Array2<T>,
    pub out_b: Array2<T>,
    /// Timestep-gated identity skip: `ε̂ += (exp(u) - 1)·x_t` with
    /// `u = time_act·skip_w + skip_b`. The projection alone can only emit
    /// `d_model`-dimensional outputs per frame.
    pub skip_w: Array2<T>,
    pub skip_b: Array2<T>,
}

impl<T: Real> DenoiserParams<T> {
    /// Gaussian init with `config.init_std`; the output projection and skip gate
    /// start at zero so a fresh network predicts ε̂ = 0.
    pub fn init(config: DenoiserConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = rng::stream(seed, "denoiser-init");
        let std = config.init_std;
        let mut gauss = |r: usize, c: usize| {
            Array2::from_shape_simple_fn((r, c), || {
                T::of_f64(std * rng.sample::<f64, _>(StandardNormal))
            })
        };
        let d = config.d_model;
        let zeros = |r: usize, c: usize| Array2::<T>::zeros((r, c));
        let in_w = gauss(config.data_width, d);
        let time_w1 = gauss(d, d);
        let time_w2 = gauss(d, d);
        let blocks = (0..config.blocks)
            .map(|_| BlockParams {
                conv_w: (0..CONV_TAPS).map(|_| gauss(d, d)).collect(),
                conv_b: zeros(1, d),
                cond_w: gauss(config.cond_width, d),
                cond_b: zeros(1, d),
                wq: gauss(d, d),
                wk: gauss(d, d),
                wv: gauss(d, d),
                wo: gauss(d, d),
                bo: zeros(1, d),
                ff_w1: gauss(d, FFN_MULT * d),
                ff_b1: zeros(1, FFN_MULT * d),
                ff_w2: gauss(FFN_MULT * d, d),
                ff_b2: zeros(1, d),
            })
            .collect();
        Ok(Self {
            config,
            in_w,
            in_b: zeros(1, d),
            time_w1,
            time_b1: zeros(1, d),
            time_w2,
            time_b2: zeros(1, d),
            blocks,
            out_w: zeros(d, config.data_width),
            out_b: zeros(1, config.data_width),
            skip_w: zeros(d, 1),
            skip_b: zeros(1, 1),
        })
    }

    pub fn zeros_like(&self) -> Self {
        let mut out = self.clone();
        for t in out.tensors_mut() {
            t.fill(T::zero());
        }
        out
    }

    /// Named views of every tensor, in a fixed order shared with
    /// [`tensors_mut`](Self::tensors_mut).
    pub fn tensors(&self) -> Vec<(String, &Array2<T>)> {
        let mut out = vec![
            ("in_w".to_string(), &self.in_w),
            ("in_b".to_string(), &self.in_b),
            ("time_w1".to_string(), &self.time_w1),
            ("time_b1".to_string(), &self.time_b1),
            ("time_w2".to_string(), &self.time_w2),
            ("time_b2".to_string(), &self.time_b2),
        ];
        for (i, b) in self.blocks.iter().enumerate() {
            for (k, w) in b.conv_w.iter().enumerate() {
                out.push((format!("block{i}.conv_w{k}"), w));
            }
            out.extend([
                (format!("block{i}.conv_b"), &b.conv_b),
                (format!("block{i}.cond_w"), &b.cond_w),
                (format!("block{i}.cond_b"), &b.cond_b),
                (format!("block{i}.wq"), &b.wq),
                (format!("block{i}.wk"), &b.wk),
                (format!("block{i}.wv"), &b.wv),
                (format!("block{i}.wo"), &b.wo),
                (format!("block{i}.bo"), &b.bo),
                (format!("block{i}.ff_w1"), &b.ff_w1),
                (format!("block{i}.ff_b1"), &b.ff_b1),
                (format!("block{i}.ff_w2"), &b.ff_w2),
                (format!("block{i}.ff_b2"), &b.ff_b2),
            ]);
        }
        out.push(("out_w".to_string(), &self.out_w));
        out.push(("out_b".to_string(), &self.out_b));
        out.push(("skip_w".to_string(), &self.skip_w));
        out.push(("skip_b".to_string(), &self.skip_b));
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Array2<T>> {
        let mut out = vec![
            &mut self.in_w,
            &mut self.in_b,
            &mut self.time_w1,
            &mut self.time_b1,
            &mut self.time_w2,
            &mut self.time_b2,
        ];
        for b in self.blocks.iter_mut() {
            out.extend(b.conv_w.iter_mut());
            out.extend([
                &mut b.conv_b,
                &mut b.cond_w,
                &mut b.cond_b,
                &mut b.wq,
                &mut b.wk,
                &mut b.wv,
                &mut b.wo,
                &mut b.bo,
                &mut b.ff_w1,
                &mut b.ff_b1,
                &mut b.ff_w2,
                &mut b.ff_b2,
            ]);
        }
        out.push(&mut self.out_w);
        out.push(&mut self.out_b);
        out.push(&mut self.skip_w);
        out.push(&mut self.skip_b);
        out
    }

    /// Rebuilds a parameter set from tensors laid out as in [`tensors`](Self::tensors).
    pub fn from_tensors(config: DenoiserConfig, tensors: Vec<Array2<T>>) -> Result<Self> {
        let mut shell = Self::init(config, 0)?;
        let slots = shell.tensors_mut();
        if slots.len() != tensors.len() {
            return Err(Error::Format(format!(
                "expected {} denoiser tensors, got {}",
                slots.len(),
                tensors.len()
            )));
        }
        for (slot, t) in slots.into_iter().zip(tensors) {
            if slot.dim() != t.dim() {
                return Err(Error::Shape(format!(
                    "denoiser tensor {:?} vs expected {:?}",
                    t.dim(),
                    slot.dim()
                )));
            }
            *slot = t;
        }
        Ok(shell)
    }

    pub fn num_parameters(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.tensors().iter().all(|(_, t)| t.iter().all(|v| v.is_finite()))
    }

    pub fn cast<U: Real>(&self) -> DenoiserParams<U> {
        let tensors = self.tensors().into_iter().map(|(_, t)| cast_matrix(t)).collect();
        DenoiserParams::from_tensors(self.config, tensors).expect("identical layout")
    }

    /// `self += other * scale`, tensor by tensor.
    pub fn add_scaled(&mut self, other: &Self, scale: T) {
        let others = other.tensors();
        for (mine, (_, theirs)) in self.tensors_mut().into_iter().zip(others) {
            mine.scaled_add(scale, theirs);
        }
    }

    pub fn squared_norm(&self) -> f64 {
        self.tensors().iter().flat_map(|(_, t)| t.iter()).map(|v| v.as_f64().powi(2)).sum()
    }
}

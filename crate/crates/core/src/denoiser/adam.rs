use super::{DenoiserParams, Real};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 1e-4, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// First/second moment estimates shaped like the parameters they track.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub config: AdamConfig,
    pub step: u64,
    pub m: DenoiserParams<T>,
    pub v: DenoiserParams<T>,
}

impl<T: Real> AdamState<T> {
    pub fn new(params: &DenoiserParams<T>, config: AdamConfig) -> Self {
        Self { config, step: 0, m: params.zeros_like(), v: params.zeros_like() }
    }
}

/// Bias-corrected Adam update of one flat parameter slice. `step` is the
/// 1-based index of the update being applied.
pub fn adam_update<T: Real>(
    param: &mut [T],
    grad: &[T],
    m: &mut [T],
    v: &mut [T],
    step: u64,
    cfg: &AdamConfig,
) -> Result<()> {
    let n = param.len();
    if grad.len() != n || m.len() != n || v.len() != n {
        return Err(Error::Shape(format!(
            "adam slices: param {n}, grad {}, m {}, v {}",
            grad.len(),
            m.len(),
            v.len()
        )));
    }
    if step == 0 {
        return Err(Error::InvalidArgument("adam step index starts at 1".into()));
    }
    let (b1, b2) = (T::of_f64(cfg.beta1), T::of_f64(cfg.beta2));
    let c1 = 1.0 / (1.0 - cfg.beta1.powf(step as f64));
    let c2 = 1.0 / (1.0 - cfg.beta2.powf(step as f64));
    let (c1, c2, lr, eps) =
        (T::of_f64(c1), T::of_f64(c2), T::of_f64(cfg.lr), T::of_f64(cfg.eps));
    for i in 0..n {
        let g = grad[i];
        m[i] = b1 * m[i] + (T::one() - b1) * g;
        v[i] = b2 * v[i] + (T::one() - b2) * g * g;
        let m_hat = m[i] * c1;
        let v_hat = v[i] * c2;
        param[i] -= lr * m_hat / (v_hat.sqrt() + eps);
    }
    Ok(())
}

/// Applies one Adam update to every tensor in `params`.
pub fn adam_step<T: Real>(
    params: &mut DenoiserParams<T>,
    grads: &DenoiserParams<T>,
    state: &mut AdamState<T>,
) -> Result<()> {
    if params.config != grads.config || params.config != state.m.config {
        return Err(Error::Shape("adam: parameter, gradient and moment layouts differ".into()));
    }
    if !grads.all_finite() {
        return Err(Error::NonFinite("gradients".into()));
    }
    state.step += 1;
    let step = state.step;
    let cfg = state.config;
    let grad_tensors = grads.tensors();
    let moments = state.m.tensors_mut().into_iter().zip(state.v.tensors_mut());
    for ((p, (_, g)), (m, v)) in params.tensors_mut().into_iter().zip(grad_tensors).zip(moments)
    {
        if p.dim() != g.dim() {
            return Err(Error::Shape("adam: tensor shape mismatch".into()));
        }
        for t in [&mut *p, &mut *m, &mut *v] {
            if !t.is_standard_layout() {
                *t = t.as_standard_layout().into_owned();
            }
        }
        let g = g.as_standard_layout();
        adam_update(
            p.as_slice_mut().expect("standard layout"),
            g.as_slice().expect("standard layout"),
            m.as_slice_mut().expect("standard layout"),
            v.as_slice_mut().expect("standard layout"),
            step,
            &cfg,
        )?;
    }
    Ok(())
}

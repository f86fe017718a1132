use std::cell::RefCell;
use std::collections::HashMap;

use ndarray::{Array2, ArrayView2, Axis};

use super::Real;
use crate::error::{Error, Result};

/// Sinusoidal position/timestep encoding, interleaved as
/// `(sin(t·ω_0), cos(t·ω_0), sin(t·ω_1), ...)` with `ω_i = 10000^(-2i/d)`.
pub fn sinusoidal_embed(t: f64, d: usize) -> Result<Vec<f64>> {
    if d == 0 || d % 2 != 0 {
        return Err(Error::InvalidArgument(format!("embedding width must be even, got {d}")));
    }
    let mut out = Vec::with_capacity(d);
    for i in 0..d / 2 {
        let freq = 10000f64.powf(-(2.0 * i as f64) / d as f64);
        out.push((t * freq).sin());
        out.push((t * freq).cos());
    }
    Ok(out)
}

pub(crate) fn position_table<T: Real>(rows: usize, d: usize) -> Result<Array2<T>> {
    thread_local! {
        static TABLES: RefCell<HashMap<(usize, usize), Array2<f64>>> = RefCell::new(HashMap::new());
    }
    TABLES.with(|cache| {
        let mut cache = cache.borrow_mut();
        if !cache.contains_key(&(rows, d)) {
            let mut table = Array2::zeros((rows, d));
            for (r, mut row) in table.axis_iter_mut(Axis(0)).enumerate() {
                for (dst, v) in row.iter_mut().zip(sinusoidal_embed(r as f64, d)?) {
                    *dst = v;
                }
            }
            cache.insert((rows, d), table);
        }
        Ok(cache[&(rows, d)].mapv(T::of_f64))
    })
}

/// Row-wise softmax with max subtraction.
pub(crate) fn softmax_rows<T: Real>(logits: &Array2<T>) -> Result<Array2<T>> {
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("attention logits".into()));
    }
    let mut out = logits.clone();
    for mut row in out.axis_iter_mut(Axis(0)) {
        let max = row.iter().fold(T::neg_infinity(), |m, v| m.max(*v));
        row.mapv_inplace(|v| (v - max).exp());
        let sum: T = row.iter().copied().sum();
        row.mapv_inplace(|v| v / sum);
    }
    Ok(out)
}

/// Projection matrices for one cross-attention layer.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionWeights<T> {
    pub wq: Array2<T>,
    pub wk: Array2<T>,
    pub wv: Array2<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionOutput<T> {
    pub output: Array2<T>,
    /// Softmax weights, one row per query.
    pub weights: Array2<T>,
}

/// `softmax(Q Kᵀ / √d_k) V` with `Q = hidden·W_Q`, `K = context·W_K`,
/// `V = context·W_V`.
pub fn cross_attention<T: Real>(
    hidden: ArrayView2<T>,
    context: ArrayView2<T>,
    w: &AttentionWeights<T>,
) -> Result<AttentionOutput<T>> {
    if hidden.ncols() != w.wq.nrows() || context.ncols() != w.wk.nrows() {
        return Err(Error::Shape(format!(
            "attention inputs {}/{} vs projections {}/{}",
            hidden.ncols(),
            context.ncols(),
            w.wq.nrows(),
            w.wk.nrows()
        )));
    }
    if w.wq.ncols() != w.wk.ncols() || w.wv.nrows() != w.wk.nrows() {
        return Err(Error::Shape("query/key projection widths differ".into()));
    }
    if context.nrows() == 0 {
        return Err(Error::Empty("attention context".into()));
    }
    let q = hidden.dot(&w.wq);
    let k = context.dot(&w.wk);
    let v = context.dot(&w.wv);
    let scale = T::of_f64(1.0 / (w.wk.ncols() as f64).sqrt());
    let weights = softmax_rows(&(q.dot(&k.t()) * scale))?;
    Ok(AttentionOutput { output: weights.dot(&v), weights })
}

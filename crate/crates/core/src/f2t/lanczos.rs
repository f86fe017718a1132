use std::f64::consts::PI;

use ndarray::{Array2, Axis};

use crate::error::{Error, Result};
use crate::vocab::{EmbeddingTable, TimedWord};

pub const DEFAULT_LOBES: usize = 3;
pub const DEFAULT_DELAYS: [usize; 4] = [1, 2, 3, 4];

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

/// Lanczos window with `lobes` lobes, `x` in units of TRs.
pub fn lanczos_kernel(x: f64, lobes: usize) -> f64 {
    let a = lobes as f64;
    if x.abs() >= a {
        0.0
    } else {
        sinc(x) * sinc(x / a)
    }
}

/// Resamples word-embedding impulses onto the TR grid (sample `i` at time
/// `i·tr`). Kernel weights are renormalized to sum to one per sample
/// whenever their sum is nonzero.
pub fn lanczos_to_tr(
    words: &[TimedWord],
    table: &EmbeddingTable,
    n_tr: usize,
    tr_seconds: f64,
    lobes: usize,
) -> Result<Array2<f64>> {
    if !(tr_seconds > 0.0 && tr_seconds.is_finite()) {
        return Err(Error::InvalidArgument(format!("TR must be positive, got {tr_seconds}")));
    }
    if lobes == 0 {
        return Err(Error::InvalidArgument("Lanczos window needs at least one lobe".into()));
    }
    let duration = n_tr as f64 * tr_seconds;
    if let Some(w) = words.iter().find(|w| !(w.onset >= 0.0 && w.onset <= duration)) {
        return Err(Error::InvalidArgument(format!(
            "onset {} outside the {duration}s record",
            w.onset
        )));
    }
    let embeddings = words.iter().map(|w| table.row(w.word)).collect::<Result<Vec<_>>>()?;
    let mut out = Array2::zeros((n_tr, table.dim()));
    for (i, mut row) in out.axis_iter_mut(Axis(0)).enumerate() {
        let t = i as f64 * tr_seconds;
        let weights: Vec<f64> =
            words.iter().map(|w| lanczos_kernel((t - w.onset) / tr_seconds, lobes)).collect();
        let total: f64 = weights.iter().sum();
        let norm = if total.abs() > 1e-12 { total } else { 1.0 };
        for (w, e) in weights.iter().zip(&embeddings) {
            if *w != 0.0 {
                row.scaled_add(w / norm, e);
            }
        }
    }
    Ok(out)
}

/// Concatenates copies of `features` shifted down by each delay (zero-padded
/// at the top).
pub fn build_delayed_stimulus(features: &Array2<f64>, delays: &[usize]) -> Result<Array2<f64>> {
    let (rows, width) = features.dim();
    if delays.is_empty() {
        return Err(Error::InvalidArgument("no delays given".into()));
    }
    if let Some(d) = delays.iter().find(|d| **d == 0 || **d >= rows) {
        return Err(Error::InvalidArgument(format!(
            "delay {d} must be in 1..{rows} for a {rows}-TR record"
        )));
    }
    let mut out = Array2::zeros((rows, width * delays.len()));
    for (b, &d) in delays.iter().enumerate() {
        out.slice_mut(ndarray::s![d.., b * width..(b + 1) * width])
            .assign(&features.slice(ndarray::s![..rows - d, ..]));
    }
    Ok(out)
}

/// Stacks rows `t + lead` for each lead (zero-padded past the end).
pub fn build_lead_stack(rows_in: &Array2<f64>, leads: &[usize]) -> Array2<f64> {
    let (rows, width) = rows_in.dim();
    let mut out = Array2::zeros((rows, width * leads.len()));
    for (b, &l) in leads.iter().enumerate() {
        if l < rows {
            out.slice_mut(ndarray::s![..rows - l, b * width..(b + 1) * width])
                .assign(&rows_in.slice(ndarray::s![l.., ..]));
        }
    }
    out
}

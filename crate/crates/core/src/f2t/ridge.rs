//! Ridge regression with optional column centering and contiguous K-fold
//! selection of the penalty.

use ndarray::{s, Array1, Array2, Axis};

use crate::error::{ensure_finite, Error, Result};
use crate::linalg::cholesky_solve;

#[derive(Debug, Clone, PartialEq)]
pub struct RidgeConfig {
    pub alphas: Vec<f64>,
    /// Contiguous folds for penalty selection; ignored for a single alpha.
    pub folds: usize,
    /// Center X and Y columns and carry the means as an intercept.
    pub center: bool,
}

impl Default for RidgeConfig {
    fn default() -> Self {
        Self {
            alphas: vec![1e-6, 1e-4, 1e-2, 1e-1, 1.0, 10.0, 100.0, 1e3],
            folds: 5,
            center: true,
        }
    }
}

impl RidgeConfig {
    pub fn fixed(alpha: f64) -> Self {
        Self { alphas: vec![alpha], folds: 0, center: true }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RidgeFit {
    pub weights: Array2<f64>,
    pub x_mean: Array1<f64>,
    pub y_mean: Array1<f64>,
    pub alpha: f64,
    /// Mean held-out R² per candidate alpha (empty when no CV ran).
    pub cv_scores: Vec<f64>,
}

impl RidgeFit {
    pub fn predict(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.weights.nrows() {
            return Err(Error::Shape(format!(
                "ridge input width {} != {}",
                x.ncols(),
                self.weights.nrows()
            )));
        }
        let centered = x - &self.x_mean.view().insert_axis(Axis(0));
        Ok(centered.dot(&self.weights) + &self.y_mean.view().insert_axis(Axis(0)))
    }

    /// Output for an all-zero input row.
    pub fn intercept(&self) -> Array1<f64> {
        &self.y_mean - &self.x_mean.dot(&self.weights)
    }
}

fn solve(x: &Array2<f64>, y: &Array2<f64>, alpha: f64, center: bool) -> Result<RidgeFit> {
    let (x_mean, y_mean) = if center {
        (x.mean_axis(Axis(0)).expect("rows"), y.mean_axis(Axis(0)).expect("rows"))
    } else {
        (Array1::zeros(x.ncols()), Array1::zeros(y.ncols()))
    };
    let xc = x - &x_mean.view().insert_axis(Axis(0));
    let yc = y - &y_mean.view().insert_axis(Axis(0));
    let mut gram = xc.t().dot(&xc);
    for i in 0..gram.nrows() {
        gram[[i, i]] += alpha;
    }
    let weights = cholesky_solve(&gram, &xc.t().dot(&yc)).map_err(|e| match e {
        Error::RankDeficient(_) => Error::RankDeficient(format!(
            "X'X + {alpha}·I is singular; use a positive ridge penalty"
        )),
        other => other,
    })?;
    Ok(RidgeFit { weights, x_mean, y_mean, alpha, cv_scores: Vec::new() })
}

/// Mean over targets of `1 - SS_res / SS_tot`; constant targets are skipped.
pub fn mean_r2(pred: &Array2<f64>, truth: &Array2<f64>) -> Option<f64> {
    let mut total = 0.0;
    let mut used = 0usize;
    for (p, t) in pred.columns().into_iter().zip(truth.columns()) {
        let mean = t.mean().expect("rows");
        let ss_tot: f64 = t.iter().map(|v| (v - mean).powi(2)).sum();
        if ss_tot <= f64::EPSILON {
            continue;
        }
        let ss_res: f64 = p.iter().zip(t.iter()).map(|(a, b)| (a - b).powi(2)).sum();
        total += 1.0 - ss_res / ss_tot;
        used += 1;
    }
    (used > 0).then(|| total / used as f64)
}

pub(crate) fn fold_bounds(n: usize, folds: usize) -> Vec<(usize, usize)> {
    (0..folds).map(|f| (f * n / folds, (f + 1) * n / folds)).collect()
}

pub(crate) fn without_rows(m: &Array2<f64>, lo: usize, hi: usize) -> Array2<f64> {
    ndarray::concatenate(Axis(0), &[m.slice(s![..lo, ..]), m.slice(s![hi.., ..])])
        .expect("same width")
}

/// `(X'X + αI)^-1 X'Y` at the grid alpha with the best mean held-out R².
pub fn fit_ridge(x: &Array2<f64>, y: &Array2<f64>, cfg: &RidgeConfig) -> Result<RidgeFit> {
    if x.nrows() != y.nrows() {
        return Err(Error::Shape(format!("X has {} rows, Y has {}", x.nrows(), y.nrows())));
    }
    if x.nrows() < 2 {
        return Err(Error::InvalidArgument("ridge needs at least two samples".into()));
    }
    if cfg.alphas.is_empty() {
        return Err(Error::InvalidArgument("empty ridge penalty grid".into()));
    }
    if let Some(a) = cfg.alphas.iter().find(|a| !(a.is_finite() && **a >= 0.0)) {
        return Err(Error::InvalidArgument(format!("ridge penalty {a} must be >= 0")));
    }
    ensure_finite(x.iter(), "ridge design matrix")?;
    ensure_finite(y.iter(), "ridge targets")?;
    if cfg.alphas.len() == 1 {
        return solve(x, y, cfg.alphas[0], cfg.center);
    }
    if cfg.folds < 2 || cfg.folds > x.nrows() {
        return Err(Error::InvalidArgument(format!(
            "{} folds cannot split {} samples",
            cfg.folds,
            x.nrows()
        )));
    }
    let bounds = fold_bounds(x.nrows(), cfg.folds);
    let mut scores = Vec::with_capacity(cfg.alphas.len());
    for &alpha in &cfg.alphas {
        let mut sum = 0.0;
        let mut used = 0usize;
        for &(lo, hi) in &bounds {
            let fit = match solve(&without_rows(x, lo, hi), &without_rows(y, lo, hi), alpha, cfg.center)
            {
                Ok(f) => f,
                Err(Error::RankDeficient(_)) => continue,
                Err(e) => return Err(e),
            };
            let held_x = x.slice(s![lo..hi, ..]).to_owned();
            let held_y = y.slice(s![lo..hi, ..]).to_owned();
            if let Some(r2) = mean_r2(&fit.predict(&held_x)?, &held_y) {
                sum += r2;
                used += 1;
            }
        }
        scores.push(if used == 0 { f64::NEG_INFINITY } else { sum / used as f64 });
    }
    let best = scores
        .iter()
        .enumerate()
        .fold(0, |best, (i, s)| if *s > scores[best] { i } else { best });
    let mut fit = solve(x, y, cfg.alphas[best], cfg.center)?;
    fit.cv_scores = scores;
    Ok(fit)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use approx::assert_abs_diff_eq;

    #[test]
    fn square_interpolation_at_zero_penalty() {
        let mut r = rng::stream(1, "ridge");
        let x = rng::normal_matrix(&mut r, 6, 6);
        let y = rng::normal_matrix(&mut r, 6, 2);
        let cfg = RidgeConfig { alphas: vec![0.0], folds: 0, center: false };
        let fit = fit_ridge(&x, &y, &cfg).unwrap();
        for (a, b) in fit.predict(&x).unwrap().iter().zip(y.iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-8);
        }
    }

    #[test]
    fn huge_penalty_shrinks_to_zero() {
        let mut r = rng::stream(2, "ridge");
        let x = rng::normal_matrix(&mut r, 30, 5);
        let y = rng::normal_matrix(&mut r, 30, 3);
        let norm = |f: &RidgeFit| f.weights.mapv(|v| v * v).sum().sqrt();
        let unit = fit_ridge(&x, &y, &RidgeConfig::fixed(1.0)).unwrap();
        let huge = fit_ridge(&x, &y, &RidgeConfig::fixed(1e12)).unwrap();
        assert!(norm(&huge) < 1e-6 * norm(&unit));
    }

    #[test]
    fn planted_weights_recovered() {
        let mut r = rng::stream(3, "ridge");
        let x = rng::normal_matrix(&mut r, 80, 6);
        let w = rng::normal_matrix(&mut r, 6, 4);
        let y = x.dot(&w);
        let fit = fit_ridge(&x, &y, &RidgeConfig::fixed(1e-9)).unwrap();
        for (a, b) in fit.weights.iter().zip(w.iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-6);
        }
        let cv = fit_ridge(&x, &y, &RidgeConfig::default()).unwrap();
        assert_eq!(cv.alpha, 1e-6);
        assert_eq!(cv.cv_scores.len(), 8);
    }

    #[test]
    fn singular_zero_penalty_is_reported() {
        let x = Array2::from_shape_fn((5, 2), |(r, _)| r as f64);
        let y = Array2::from_shape_fn((5, 1), |(r, _)| r as f64);
        assert!(matches!(fit_ridge(&x, &y, &RidgeConfig::fixed(0.0)), Err(Error::RankDeficient(_))));
        assert!(fit_ridge(&x, &y, &RidgeConfig::fixed(0.1)).is_ok());
        let nan = Array2::from_elem((5, 2), f64::NAN);
        assert!(matches!(fit_ridge(&nan, &y, &RidgeConfig::fixed(0.1)), Err(Error::NonFinite(_))));
        assert!(fit_ridge(&x.slice(s![..1, ..]).to_owned(), &y.slice(s![..1, ..]).to_owned(),
            &RidgeConfig::fixed(0.1)).is_err());
    }
}

//! Thin bridge to nalgebra for the dense solves and eigendecompositions.

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array1, Array2, Axis};

use crate::error::{Error, Result};

pub(crate) fn to_na(m: &Array2<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), m.ncols(), |r, c| m[[r, c]])
}

pub(crate) fn from_na(m: &DMatrix<f64>) -> Array2<f64> {
    Array2::from_shape_fn((m.nrows(), m.ncols()), |(r, c)| m[(r, c)])
}

/// Solves `a x = b` for symmetric positive-definite `a`.
pub fn cholesky_solve(a: &Array2<f64>, b: &Array2<f64>) -> Result<Array2<f64>> {
    if a.nrows() != a.ncols() || a.nrows() != b.nrows() {
        return Err(Error::Shape(format!("solve {:?} against {:?}", a.dim(), b.dim())));
    }
    let chol = to_na(a)
        .cholesky()
        .ok_or_else(|| Error::RankDeficient("normal matrix is not positive definite".into()))?;
    let scale = (0..a.nrows()).map(|i| a[[i, i]].abs()).fold(0.0, f64::max);
    let floor = scale * a.nrows() as f64 * f64::EPSILON;
    if (0..a.nrows()).any(|i| chol.l_dirty()[(i, i)].powi(2) <= floor) {
        return Err(Error::RankDeficient("normal matrix is numerically singular".into()));
    }
    Ok(from_na(&chol.solve(&to_na(b))))
}

/// Eigenvalues (ascending) and matching eigenvector columns of a symmetric
/// matrix.
pub fn symmetric_eigen(a: &Array2<f64>) -> (Vec<f64>, Array2<f64>) {
    let sym = (to_na(a) + to_na(a).transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors =
        Array2::from_shape_fn((a.nrows(), order.len()), |(r, c)| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

/// Principal square root of a symmetric positive semi-definite matrix.
/// Negative eigenvalues from roundoff are clamped to zero.
pub fn sqrt_psd(a: &Array2<f64>) -> Array2<f64> {
    let (values, vectors) = symmetric_eigen(a);
    let roots = Array1::from_iter(values.iter().map(|v| v.max(0.0).sqrt()));
    let scaled = &vectors * &roots.insert_axis(Axis(0));
    scaled.dot(&vectors.t())
}

/// Column means and unbiased covariance of the rows of `x`.
pub fn mean_and_covariance(x: &Array2<f64>) -> Result<(Array1<f64>, Array2<f64>)> {
    if x.nrows() < 2 {
        return Err(Error::InvalidArgument("covariance needs at least two samples".into()));
    }
    let mean = x.mean_axis(Axis(0)).expect("non-empty");
    let centered = x - &mean.view().insert_axis(Axis(0));
    let cov = centered.t().dot(&centered) / (x.nrows() - 1) as f64;
    Ok((mean, cov))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    #[test]
    fn solve_and_sqrt() {
        let a = array![[4.0, 1.0], [1.0, 3.0]];
        let b = array![[1.0], [2.0]];
        let x = cholesky_solve(&a, &b).unwrap();
        let back = a.dot(&x);
        assert_abs_diff_eq!(back[[0, 0]], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(back[[1, 0]], 2.0, epsilon = 1e-12);
        let r = sqrt_psd(&a);
        let sq = r.dot(&r);
        for (p, q) in sq.iter().zip(a.iter()) {
            assert_abs_diff_eq!(p, q, epsilon = 1e-12);
        }
        assert!(cholesky_solve(&array![[1.0, 1.0], [1.0, 1.0]], &b).is_err());
    }

    #[test]
    fn eigen_sorted() {
        let (v, _) = symmetric_eigen(&array![[2.0, 0.0], [0.0, 1.0]]);
        assert_eq!(v, vec![1.0, 2.0]);
    }
}

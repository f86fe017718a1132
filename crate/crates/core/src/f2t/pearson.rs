use ndarray::{s, Array2};

use super::ridge::{fit_ridge, fold_bounds, without_rows, RidgeConfig};
use crate::error::{Error, Result};
use crate::metrics::pearson;

#[derive(Debug, Clone, PartialEq)]
pub struct PearsonMap {
    /// Held-out correlation per voxel; 0 where undefined.
    pub r: Vec<f64>,
    /// Voxels whose correlation was undefined in every fold.
    pub undefined: Vec<bool>,
}

/// Cross-validated voxelwise ridge from latents to voxels. Each voxel's score
/// is the held-out Pearson correlation averaged over folds; pooling folds
/// first would let the shift between training and held-out means leak in.
pub fn pearson_map(
    latents: &Array2<f64>,
    fmri: &Array2<f64>,
    folds: usize,
    ridge: &RidgeConfig,
) -> Result<PearsonMap> {
    let n = latents.nrows();
    if fmri.nrows() != n {
        return Err(Error::Shape(format!("{n} latent rows vs {} fMRI rows", fmri.nrows())));
    }
    if folds < 2 || n < folds {
        return Err(Error::InvalidArgument(format!("need n >= folds >= 2, got n={n}, folds={folds}")));
    }
    let bounds = fold_bounds(n, folds);
    let mut sums = vec![0.0; fmri.ncols()];
    let mut defined = vec![0usize; fmri.ncols()];
    for &(lo, hi) in &bounds {
        let train_x = without_rows(latents, lo, hi);
        let test_x = latents.slice(s![lo..hi, ..]).to_owned();
        // Each voxel picks its own penalty, as in voxelwise encoding models.
        for v in 0..fmri.ncols() {
            let column = fmri.slice(s![.., v..v + 1]).to_owned();
            let fit = fit_ridge(&train_x, &without_rows(&column, lo, hi), ridge)?;
            let pred = fit.predict(&test_x)?;
            let truth = column.slice(s![lo..hi, 0]).to_vec();
            if let Some(r) = pearson(&pred.column(0).to_vec(), &truth) {
                sums[v] += r;
                defined[v] += 1;
            }
        }
    }
    let r = sums.iter().zip(&defined).map(|(s, d)| if *d == 0 { 0.0 } else { s / *d as f64 }).collect();
    let undefined = defined.iter().map(|d| *d == 0).collect();
    Ok(PearsonMap { r, undefined })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use approx::assert_abs_diff_eq;
    use ndarray::{concatenate, Axis};

    #[test]
    fn planted_noise_and_constant_voxels() {
        let mut r = rng::stream(9, "pearson");
        let latents = rng::normal_matrix(&mut r, 200, 6);
        let w = rng::normal_matrix(&mut r, 6, 2);
        let linear = latents.dot(&w);
        let negated = latents.slice(s![.., 2..3]).mapv(|v| -v);
        let noise = rng::normal_matrix(&mut r, 200, 3);
        let constant = Array2::from_elem((200, 1), 4.0);
        let fmri = concatenate(Axis(1), &[linear.view(), negated.view(), noise.view(), constant.view()]).unwrap();
        let map = pearson_map(&latents, &fmri, 5, &RidgeConfig::default()).unwrap();
        for v in &map.r[..3] {
            assert_abs_diff_eq!(*v, 1.0, epsilon = 1e-6);
        }
        for v in &map.r[3..6] {
            assert!(v.abs() < 0.2, "{v}");
        }
        assert_eq!(map.r[6], 0.0);
        assert_eq!(map.undefined, vec![false, false, false, false, false, false, true]);
        assert!(pearson_map(&latents, &fmri, 1, &RidgeConfig::default()).is_err());
    }
}

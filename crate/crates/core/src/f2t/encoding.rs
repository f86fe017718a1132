use ndarray::{Array1, Array2, Axis};

use super::lanczos::{build_delayed_stimulus, lanczos_to_tr, DEFAULT_DELAYS, DEFAULT_LOBES};
use super::ridge::{fit_ridge, RidgeConfig, RidgeFit};
use super::FmriRecord;
use crate::error::{Error, Result};
use crate::vocab::{EmbeddingTable, TimedWord};

/// Floor on the per-voxel residual variance used by the brain likelihood.
pub const MIN_NOISE_VAR: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct EncodingConfig {
    pub delays: Vec<usize>,
    pub lobes: usize,
    pub ridge: RidgeConfig,
}

impl Default for EncodingConfig {
    fn default() -> Self {
        Self { delays: DEFAULT_DELAYS.to_vec(), lobes: DEFAULT_LOBES, ridge: RidgeConfig::default() }
    }
}

/// Word stream to voxel predictor. Owns the embedding table it was fitted
/// with so predictions cannot silently switch feature spaces.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodingModel {
    pub table: EmbeddingTable,
    pub ridge: RidgeFit,
    pub noise_var: Array1<f64>,
    pub delays: Vec<usize>,
    pub lobes: usize,
}

impl EncodingModel {
    pub fn n_voxels(&self) -> usize {
        self.noise_var.len()
    }

    pub fn stimulus(&self, words: &[TimedWord], n_tr: usize, tr_seconds: f64) -> Result<Array2<f64>> {
        let features = lanczos_to_tr(words, &self.table, n_tr, tr_seconds, self.lobes)?;
        build_delayed_stimulus(&features, &self.delays)
    }
}

/// Predicted voxels on an `n_tr` grid for a timed word stream.
pub fn predict_fmri(
    model: &EncodingModel,
    words: &[TimedWord],
    n_tr: usize,
    tr_seconds: f64,
) -> Result<Array2<f64>> {
    model.ridge.predict(&model.stimulus(words, n_tr, tr_seconds)?)
}

pub fn fit_encoding(
    runs: &[(Vec<TimedWord>, FmriRecord)],
    table: &EmbeddingTable,
    cfg: &EncodingConfig,
) -> Result<EncodingModel> {
    if runs.is_empty() {
        return Err(Error::Empty("no paired runs to fit the encoding model".into()));
    }
    let n_voxels = runs[0].1.n_voxels();
    let mut xs = Vec::with_capacity(runs.len());
    let mut ys = Vec::with_capacity(runs.len());
    for (words, rec) in runs {
        if rec.n_voxels() != n_voxels {
            return Err(Error::Shape(format!("runs disagree on voxel count: {} vs {n_voxels}", rec.n_voxels())));
        }
        let features = lanczos_to_tr(words, table, rec.n_tr(), rec.tr_seconds(), cfg.lobes)?;
        xs.push(build_delayed_stimulus(&features, &cfg.delays)?);
        ys.push(rec.voxels().view());
    }
    let x = ndarray::concatenate(Axis(0), &xs.iter().map(|a| a.view()).collect::<Vec<_>>())
        .expect("same stimulus width");
    let y = ndarray::concatenate(Axis(0), &ys).expect("same voxel count");
    let ridge = fit_ridge(&x, &y, &cfg.ridge)?;
    let resid = ridge.predict(&x)? - &y;
    let noise_var = resid.mapv(|v| v * v).mean_axis(Axis(0)).expect("rows").mapv(|v| v.max(MIN_NOISE_VAR));
    Ok(EncodingModel {
        table: table.clone(),
        ridge,
        noise_var,
        delays: cfg.delays.clone(),
        lobes: cfg.lobes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::f2t::{mean_r2, Region};
    use crate::rng;
    use crate::vocab::timed_from_groups;
    use approx::assert_abs_diff_eq;
    use rand::Rng;

    fn world(seed: u64, n_runs: usize, noise: f64) -> (EmbeddingTable, Array2<f64>, Vec<(Vec<TimedWord>, FmriRecord)>) {
        let table = EmbeddingTable::seeded(12, 4, seed, "enc-test-table");
        let mut r = rng::stream(seed, "enc-test");
        let mixing = rng::normal_matrix(&mut r, 16, 6);
        let runs = (0..n_runs)
            .map(|_| {
                let groups: Vec<Vec<u32>> =
                    (0..12).map(|_| (0..2).map(|_| r.random_range(0..12)).collect()).collect();
                let words = timed_from_groups(&groups, 2.0);
                let f = lanczos_to_tr(&words, &table, 12, 2.0, 3).unwrap();
                let clean = build_delayed_stimulus(&f, &DEFAULT_DELAYS).unwrap().dot(&mixing);
                let noisy = &clean + &(rng::normal_matrix(&mut r, 12, 6) * noise);
                (words, FmriRecord::new(noisy, 2.0, Region::All).unwrap())
            })
            .collect();
        (table, mixing, runs)
    }

    #[test]
    fn closed_loop_prediction_is_exact() {
        let (table, _, runs) = world(5, 12, 0.0);
        let model = fit_encoding(&runs[..10], &table, &EncodingConfig::default()).unwrap();
        for (words, rec) in &runs[10..] {
            let pred = predict_fmri(&model, words, rec.n_tr(), 2.0).unwrap();
            assert!(mean_r2(&pred, rec.voxels()).unwrap() > 0.99);
        }
        assert!(model.noise_var.iter().all(|v| *v >= MIN_NOISE_VAR));
    }

    #[test]
    fn empty_stream_gives_intercept_and_linearity_in_table() {
        let (table, _, runs) = world(6, 6, 0.1);
        let model = fit_encoding(&runs, &table, &EncodingConfig::default()).unwrap();
        let empty = predict_fmri(&model, &[], 8, 2.0).unwrap();
        let intercept = model.ridge.intercept();
        for row in empty.rows() {
            for (a, b) in row.iter().zip(intercept.iter()) {
                assert_abs_diff_eq!(a, b, epsilon = 1e-12);
            }
        }
        let words = &runs[0].0;
        let base = predict_fmri(&model, words, 12, 2.0).unwrap() - &intercept;
        let mut doubled = model.clone();
        doubled.table = EmbeddingTable::from_rows(table.rows() * 2.0).unwrap();
        let twice = predict_fmri(&doubled, words, 12, 2.0).unwrap() - &intercept;
        for (a, b) in twice.iter().zip(base.iter()) {
            assert_abs_diff_eq!(*a, 2.0 * b, epsilon = 1e-9);
        }
        let unknown = [TimedWord { word: 99, onset: 1.0 }];
        assert!(matches!(predict_fmri(&model, &unknown, 12, 2.0), Err(Error::UnknownWord(99))));
    }
}

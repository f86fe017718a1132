use ndarray::{Array2, Axis};

use super::lanczos::build_lead_stack;
use super::ridge::{fit_ridge, RidgeConfig, RidgeFit};
use super::FmriRecord;
use crate::error::{Error, Result};

/// Words spoken in TR `t` drive the response seen `1..=4` TRs later, so the
/// rate for TR `t` is read from the voxel rows that follow it.
pub const DEFAULT_LEADS: [usize; 4] = [1, 2, 3, 4];

#[derive(Debug, Clone, PartialEq)]
pub struct WordRateModel {
    pub ridge: RidgeFit,
    pub leads: Vec<usize>,
}

pub fn fit_word_rate(
    runs: &[(FmriRecord, Vec<usize>)],
    leads: &[usize],
    ridge: &RidgeConfig,
) -> Result<WordRateModel> {
    if runs.is_empty() {
        return Err(Error::Empty("no runs to fit the word-rate model".into()));
    }
    if leads.is_empty() {
        return Err(Error::InvalidArgument("word-rate model needs at least one lead".into()));
    }
    let mut xs = Vec::with_capacity(runs.len());
    let mut ys = Vec::with_capacity(runs.len());
    for (rec, counts) in runs {
        if counts.len() != rec.n_tr() {
            return Err(Error::Shape(format!(
                "{} word counts for a {}-TR record",
                counts.len(),
                rec.n_tr()
            )));
        }
        xs.push(build_lead_stack(rec.voxels(), leads));
        ys.push(Array2::from_shape_fn((counts.len(), 1), |(i, _)| counts[i] as f64));
    }
    let view = |v: &Vec<Array2<f64>>| {
        ndarray::concatenate(Axis(0), &v.iter().map(|a| a.view()).collect::<Vec<_>>())
    };
    let x = view(&xs).map_err(|_| Error::Shape("runs disagree on voxel count".into()))?;
    let y = view(&ys).expect("single column");
    Ok(WordRateModel { ridge: fit_ridge(&x, &y, ridge)?, leads: leads.to_vec() })
}

/// Real-valued rate before rounding.
pub fn raw_word_rate(model: &WordRateModel, fmri: &FmriRecord) -> Result<Vec<f64>> {
    let x = build_lead_stack(fmri.voxels(), &model.leads);
    Ok(model.ridge.predict(&x)?.column(0).to_vec())
}

pub fn predict_word_rate(model: &WordRateModel, fmri: &FmriRecord) -> Result<Vec<usize>> {
    Ok(raw_word_rate(model, fmri)?.into_iter().map(|r| r.round().max(0.0) as usize).collect())
}

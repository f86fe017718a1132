use std::fmt;

use ndarray::Array2;

use crate::error::{ensure_finite, Error, Result};

/// Which signal a condition sequence (and a denoiser trained on it) carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Modality {
    Text,
    Fmri,
}

impl Modality {
    pub fn code(self) -> u32 {
        match self {
            Modality::Text => 0,
            Modality::Fmri => 1,
        }
    }

    pub fn from_code(code: u32) -> Result<Self> {
        match code {
            0 => Ok(Modality::Text),
            1 => Ok(Modality::Fmri),
            other => Err(Error::Format(format!("unknown modality code {other}"))),
        }
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Modality::Text => "text",
            Modality::Fmri => "fmri",
        })
    }
}

/// Frame-aligned conditioning matrix (rows = gesture frames).
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionSequence {
    values: Array2<f64>,
    modality: Modality,
}

impl ConditionSequence {
    pub fn new(values: Array2<f64>, modality: Modality) -> Result<Self> {
        if values.nrows() == 0 {
            return Err(Error::Empty("condition sequence has no rows".into()));
        }
        ensure_finite(values.iter(), "condition sequence")?;
        Ok(Self { values, modality })
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn modality(&self) -> Modality {
        self.modality
    }

    pub fn len(&self) -> usize {
        self.values.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.nrows() == 0
    }

    pub fn width(&self) -> usize {
        self.values.ncols()
    }
}

//! fMRI-to-text decoding: a ridge encoding model over resampled word
//! embeddings, a word-rate model and a beam search guided by a language prior.

mod beam;
mod encoding;
mod lanczos;
mod pearson;
mod prior;
mod rate;
mod ridge;

use std::fmt;
use std::str::FromStr;

use ndarray::Array2;

use crate::error::{ensure_finite, Error, Result};
use crate::vocab::{words_by_tr, EmbeddingTable, TimedWord, WordId};

pub use beam::{
    beam_decode, beam_search, candidate_words, word_error_rate, BeamConfig, BeamState, Candidate,
};
pub use encoding::{fit_encoding, predict_fmri, EncodingConfig, EncodingModel, MIN_NOISE_VAR};
pub use lanczos::{
    build_delayed_stimulus, build_lead_stack, lanczos_kernel, lanczos_to_tr, DEFAULT_DELAYS,
    DEFAULT_LOBES,
};
pub use pearson::{pearson_map, PearsonMap};
pub use prior::{nucleus_set, BigramPrior, LanguagePrior, DEFAULT_TOP_P};
pub use rate::{fit_word_rate, predict_word_rate, raw_word_rate, WordRateModel, DEFAULT_LEADS};
pub use ridge::{fit_ridge, mean_r2, RidgeConfig, RidgeFit};

pub const DEFAULT_TR_SECONDS: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Region {
    All,
    Auditory,
    Speech,
    SpeechAuditory,
    Motor,
}

impl Region {
    pub const ALL: [Region; 5] =
        [Region::All, Region::Auditory, Region::Speech, Region::SpeechAuditory, Region::Motor];

    /// Voxel count of the region in the original recordings, where known.
    pub fn reference_voxels(self) -> Option<usize> {
        match self {
            Region::All => Some(10_000),
            Region::Auditory => Some(1_431),
            Region::Speech => Some(498),
            Region::SpeechAuditory => Some(1_431 + 498),
            Region::Motor => None,
        }
    }

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Result<Self> {
        Self::ALL
            .get(code as usize)
            .copied()
            .ok_or_else(|| Error::Format(format!("unknown region code {code}")))
    }
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Region::All => "all",
            Region::Auditory => "auditory",
            Region::Speech => "speech",
            Region::SpeechAuditory => "speech+auditory",
            Region::Motor => "motor",
        })
    }
}

impl FromStr for Region {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|r| r.to_string() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown region '{s}'")))
    }
}

/// One fMRI run: rows are TR samples, columns voxels.
#[derive(Debug, Clone, PartialEq)]
pub struct FmriRecord {
    voxels: Array2<f64>,
    tr_seconds: f64,
    region: Region,
}

impl FmriRecord {
    pub fn new(voxels: Array2<f64>, tr_seconds: f64, region: Region) -> Result<Self> {
        if voxels.nrows() == 0 {
            return Err(Error::Empty("fMRI record has no TR samples".into()));
        }
        if !(tr_seconds > 0.0 && tr_seconds.is_finite()) {
            return Err(Error::InvalidArgument(format!("TR must be positive, got {tr_seconds}")));
        }
        ensure_finite(voxels.iter(), "fMRI voxels")?;
        Ok(Self { voxels, tr_seconds, region })
    }

    pub fn voxels(&self) -> &Array2<f64> {
        &self.voxels
    }

    pub fn tr_seconds(&self) -> f64 {
        self.tr_seconds
    }

    pub fn region(&self) -> Region {
        self.region
    }

    pub fn n_tr(&self) -> usize {
        self.voxels.nrows()
    }

    pub fn n_voxels(&self) -> usize {
        self.voxels.ncols()
    }

    pub fn duration(&self) -> f64 {
        self.n_tr() as f64 * self.tr_seconds
    }
}

/// Everything beam decoding needs, fitted together.
#[derive(Debug, Clone, PartialEq)]
pub struct F2tDecoder {
    pub encoding: EncodingModel,
    pub rate: WordRateModel,
    pub prior: BigramPrior,
    pub beam: BeamConfig,
}

impl F2tDecoder {
    /// Fits the encoding and word-rate models on paired runs and the bigram
    /// prior on `corpus`.
    pub fn fit(
        runs: &[(Vec<TimedWord>, FmriRecord)],
        corpus: &[Vec<WordId>],
        table: &EmbeddingTable,
        encoding: &EncodingConfig,
        beam: BeamConfig,
    ) -> Result<Self> {
        let enc = fit_encoding(runs, table, encoding)?;
        let counts: Vec<(FmriRecord, Vec<usize>)> = runs
            .iter()
            .map(|(words, rec)| {
                let groups = words_by_tr(words, rec.n_tr(), rec.tr_seconds());
                (rec.clone(), groups.iter().map(Vec::len).collect())
            })
            .collect();
        let rate = fit_word_rate(&counts, &DEFAULT_LEADS, &encoding.ridge)?;
        let prior = BigramPrior::fit(corpus, table.vocab_size())?;
        Ok(Self { encoding: enc, rate, prior, beam })
    }

    pub fn decode(&self, fmri: &FmriRecord, seed: u64) -> Result<Vec<TimedWord>> {
        beam_decode(fmri, &self.prior, &self.encoding, &self.rate, &self.beam, seed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn region_labels_round_trip() {
        for r in Region::ALL {
            assert_eq!(r.to_string().parse::<Region>().unwrap(), r);
            assert_eq!(Region::from_code(r.code()).unwrap(), r);
        }
        assert_eq!(Region::SpeechAuditory.reference_voxels(), Some(1929));
        assert!("visual".parse::<Region>().is_err());
    }

    #[test]
    fn record_validation() {
        assert!(FmriRecord::new(Array2::zeros((0, 3)), 2.0, Region::All).is_err());
        assert!(FmriRecord::new(Array2::zeros((2, 3)), 0.0, Region::All).is_err());
        assert!(FmriRecord::new(Array2::from_elem((2, 3), f64::NAN), 2.0, Region::All).is_err());
        let r = FmriRecord::new(Array2::zeros((5, 3)), 2.0, Region::Speech).unwrap();
        assert_eq!(r.duration(), 10.0);
    }
}

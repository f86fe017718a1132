//! Word identifiers, timed word streams and seeded embedding tables.

use ndarray::{Array2, Axis};

use crate::condition::{ConditionSequence, Modality};
use crate::error::{Error, Result};
use crate::rng;

pub type WordId = u32;

/// Reserved token filling frames (or TRs) with no word.
pub const SILENCE: WordId = u32::MAX;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimedWord {
    pub word: WordId,
    /// Onset in seconds from the start of the record.
    pub onset: f64,
}

/// Onsets for `count` words spread uniformly inside TR `tr_index`.
pub fn spread_onsets(tr_index: usize, count: usize, tr_seconds: f64) -> Vec<f64> {
    (0..count)
        .map(|j| (tr_index as f64 + (j as f64 + 0.5) / count as f64) * tr_seconds)
        .collect()
}

/// Groups a timed stream by the TR each onset falls in.
pub fn words_by_tr(words: &[TimedWord], n_tr: usize, tr_seconds: f64) -> Vec<Vec<WordId>> {
    let mut out = vec![Vec::new(); n_tr];
    for w in words {
        let idx = (w.onset / tr_seconds).floor();
        if idx >= 0.0 && (idx as usize) < n_tr {
            out[idx as usize].push(w.word);
        }
    }
    out
}

/// Lays out per-TR word groups on the TR grid with uniformly spread onsets.
pub fn timed_from_groups(groups: &[Vec<WordId>], tr_seconds: f64) -> Vec<TimedWord> {
    groups
        .iter()
        .enumerate()
        .flat_map(|(i, g)| {
            let onsets = spread_onsets(i, g.len(), tr_seconds);
            g.iter().zip(onsets).map(|(w, onset)| TimedWord { word: *w, onset }).collect::<Vec<_>>()
        })
        .collect()
}

/// Deterministic word → vector table. The silence token maps to the zero
/// vector.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    rows: Array2<f64>,
}

impl EmbeddingTable {
    /// `vocab x dim` standard-normal rows scaled by `1/sqrt(dim)` drawn from
    /// the named stream.
    pub fn seeded(vocab: usize, dim: usize, seed: u64, label: &str) -> Self {
        let mut r = rng::stream(seed, label);
        let scale = if dim == 0 { 1.0 } else { 1.0 / (dim as f64).sqrt() };
        Self { rows: rng::normal_matrix(&mut r, vocab, dim) * scale }
    }

    pub fn from_rows(rows: Array2<f64>) -> Result<Self> {
        crate::error::ensure_finite(rows.iter(), "embedding table")?;
        Ok(Self { rows })
    }

    pub fn vocab_size(&self) -> usize {
        self.rows.nrows()
    }

    pub fn dim(&self) -> usize {
        self.rows.ncols()
    }

    pub fn rows(&self) -> &Array2<f64> {
        &self.rows
    }

    pub fn check(&self, word: WordId) -> Result<()> {
        if word == SILENCE || (word as usize) < self.vocab_size() {
            Ok(())
        } else {
            Err(Error::UnknownWord(word))
        }
    }

    pub fn row(&self, word: WordId) -> Result<ndarray::Array1<f64>> {
        self.check(word)?;
        if word == SILENCE {
            Ok(ndarray::Array1::zeros(self.dim()))
        } else {
            Ok(self.rows.index_axis(Axis(0), word as usize).to_owned())
        }
    }

    /// Row `i` of the result is the embedding of `words[i]`.
    pub fn embed(&self, words: &[WordId]) -> Result<Array2<f64>> {
        let mut out = Array2::zeros((words.len(), self.dim()));
        for (mut dst, w) in out.axis_iter_mut(Axis(0)).zip(words) {
            dst.assign(&self.row(*w)?);
        }
        Ok(out)
    }
}

/// Frame-aligned word ids to a text condition sequence.
pub fn embed_frame_text(words: &[WordId], table: &EmbeddingTable) -> Result<ConditionSequence> {
    ConditionSequence::new(table.embed(words)?, Modality::Text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn identical_words_give_identical_rows() {
        let t = EmbeddingTable::seeded(10, 4, 1, "t");
        let c = embed_frame_text(&[3; 6], &t).unwrap();
        for r in c.values().rows() {
            assert_eq!(r, t.rows().row(3));
        }
    }

    #[test]
    fn permutation_permutes_rows() {
        let t = EmbeddingTable::seeded(10, 4, 1, "t");
        let a = embed_frame_text(&[1, 2, 3], &t).unwrap();
        let b = embed_frame_text(&[3, 1, 2], &t).unwrap();
        assert_eq!(a.values().row(0), b.values().row(1));
        assert_eq!(a.values().row(2), b.values().row(0));
    }

    #[test]
    fn toy_table_lookup() {
        let t = EmbeddingTable::from_rows(array![[1.0, 0.0], [0.0, 2.0], [-1.0, 3.0]]).unwrap();
        let c = embed_frame_text(&[2, 0, 2, 1], &t).unwrap();
        assert_eq!(c.values(), &array![[-1.0, 3.0], [1.0, 0.0], [-1.0, 3.0], [0.0, 2.0]]);
        assert!(matches!(embed_frame_text(&[3], &t), Err(Error::UnknownWord(3))));
        assert_eq!(t.embed(&[SILENCE]).unwrap(), array![[0.0, 0.0]]);
    }

    #[test]
    fn onset_grouping_round_trips() {
        let groups = vec![vec![4, 5], vec![], vec![6, 7, 8]];
        let timed = timed_from_groups(&groups, 2.0);
        assert_eq!(timed[0].onset, 0.5);
        assert_eq!(timed[2].onset, 4.0 + 2.0 / 6.0);
        assert_eq!(words_by_tr(&timed, 3, 2.0), groups);
    }
}

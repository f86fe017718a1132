use ndarray::Array2;

use crate::error::{Error, Result};
use crate::vocab::{WordId, SILENCE};

pub const DEFAULT_TOP_P: f64 = 0.9;

const MASS_TOLERANCE: f64 = 1e-9;
// Accumulated sums of many small probabilities land a few ulps short of p.
const PREFIX_SLACK: f64 = 1e-12;

/// Next-word distribution given the words decoded so far.
pub trait LanguagePrior: Sync {
    fn vocab_size(&self) -> usize;
    fn next_word_distribution(&self, history: &[WordId]) -> Vec<f64>;
}

/// Smallest descending-probability prefix whose mass reaches `p`; ties are
/// ordered by ascending id.
pub fn nucleus_set(probs: &[f64], p: f64) -> Result<Vec<usize>> {
    if probs.is_empty() {
        return Err(Error::Empty("empty next-word distribution".into()));
    }
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::InvalidArgument(format!("nucleus mass {p} outside (0, 1]")));
    }
    if probs.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(Error::InvalidArgument("distribution has negative or non-finite entries".into()));
    }
    let total: f64 = probs.iter().sum();
    if (total - 1.0).abs() > MASS_TOLERANCE {
        return Err(Error::InvalidArgument(format!("distribution sums to {total}, not 1")));
    }
    let mut order: Vec<usize> = (0..probs.len()).collect();
    order.sort_by(|&a, &b| probs[b].total_cmp(&probs[a]).then(a.cmp(&b)));
    let mut mass = 0.0;
    for (n, &i) in order.iter().enumerate() {
        mass += probs[i];
        if mass >= p - PREFIX_SLACK {
            order.truncate(n + 1);
            break;
        }
    }
    Ok(order)
}

/// Bigram model; row `vocab` holds the start-of-sequence distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct BigramPrior {
    probs: Array2<f64>,
}

impl BigramPrior {
    /// Add-one smoothed counts over a corpus of word sequences.
    pub fn fit(corpus: &[Vec<WordId>], vocab: usize) -> Result<Self> {
        if vocab == 0 {
            return Err(Error::InvalidArgument("empty vocabulary".into()));
        }
        let mut counts = Array2::<f64>::ones((vocab + 1, vocab));
        for seq in corpus {
            let mut prev = vocab;
            for &w in seq.iter().filter(|w| **w != SILENCE) {
                if w as usize >= vocab {
                    return Err(Error::UnknownWord(w));
                }
                counts[[prev, w as usize]] += 1.0;
                prev = w as usize;
            }
        }
        for mut row in counts.rows_mut() {
            let s = row.sum();
            row /= s;
        }
        Ok(Self { probs: counts })
    }

    /// Uses an explicit `(vocab + 1) x vocab` table, rows being the
    /// start distribution last.
    pub fn from_table(probs: Array2<f64>) -> Result<Self> {
        if probs.ncols() == 0 || probs.nrows() != probs.ncols() + 1 {
            return Err(Error::Shape(format!("bigram table must be (V+1) x V, got {:?}", probs.dim())));
        }
        for row in probs.rows() {
            let s: f64 = row.sum();
            if row.iter().any(|v| !(v.is_finite() && *v >= 0.0)) || (s - 1.0).abs() > MASS_TOLERANCE {
                return Err(Error::InvalidArgument("bigram rows must be distributions".into()));
            }
        }
        Ok(Self { probs })
    }

    pub fn table(&self) -> &Array2<f64> {
        &self.probs
    }
}

impl LanguagePrior for BigramPrior {
    fn vocab_size(&self) -> usize {
        self.probs.ncols()
    }

    fn next_word_distribution(&self, history: &[WordId]) -> Vec<f64> {
        let row = history
            .iter()
            .rev()
            .find(|w| **w != SILENCE && (**w as usize) < self.vocab_size())
            .map_or(self.vocab_size(), |w| *w as usize);
        self.probs.row(row).to_vec()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn nucleus_examples() {
        assert_eq!(nucleus_set(&[0.5, 0.4, 0.1], 0.9).unwrap(), vec![0, 1]);
        assert_eq!(nucleus_set(&[0.1; 10], 0.9).unwrap().len(), 9);
        let mut one_hot = vec![0.0; 6];
        one_hot[4] = 1.0;
        for p in [0.1, 0.5, 1.0] {
            assert_eq!(nucleus_set(&one_hot, p).unwrap(), vec![4]);
        }
        assert_eq!(nucleus_set(&[0.25, 0.5, 0.25], 0.6).unwrap(), vec![1, 0]);
        assert!(nucleus_set(&[], 0.9).is_err());
        assert!(nucleus_set(&[0.5, 0.4], 0.9).is_err());
    }

    proptest! {
        #[test]
        fn nucleus_is_minimal(raw in prop::collection::vec(0.0f64..1.0, 1..30), p in 0.05f64..1.0) {
            let total: f64 = raw.iter().sum();
            prop_assume!(total > 1e-3);
            let probs: Vec<f64> = raw.iter().map(|v| v / total).collect();
            let set = nucleus_set(&probs, p).unwrap();
            let mass: f64 = set.iter().map(|i| probs[*i]).sum();
            prop_assert!(mass >= p - 1e-9);
            let without_last: f64 = set[..set.len() - 1].iter().map(|i| probs[*i]).sum();
            prop_assert!(without_last < p + 1e-9);
        }
    }

    #[test]
    fn bigram_add_one() {
        let prior = BigramPrior::fit(&[vec![0, 1, 0, 1], vec![1, SILENCE, 2]], 3).unwrap();
        let after0 = prior.next_word_distribution(&[0]);
        assert_abs_diff_eq!(after0[1], 3.0 / 5.0, epsilon = 1e-12);
        assert_abs_diff_eq!(after0[0], 1.0 / 5.0, epsilon = 1e-12);
        let start = prior.next_word_distribution(&[]);
        assert_abs_diff_eq!(start[0], 2.0 / 5.0, epsilon = 1e-12);
        assert_eq!(prior.next_word_distribution(&[1, SILENCE]), prior.next_word_distribution(&[1]));
        let after1 = prior.next_word_distribution(&[1]);
        assert_abs_diff_eq!(after1[2], 2.0 / 5.0, epsilon = 1e-12);
        for h in [vec![], vec![0], vec![2, 1]] {
            assert_abs_diff_eq!(prior.next_word_distribution(&h).iter().sum::<f64>(), 1.0, epsilon = 1e-9);
        }
        assert!(matches!(BigramPrior::fit(&[vec![7]], 3), Err(Error::UnknownWord(7))));
    }
}

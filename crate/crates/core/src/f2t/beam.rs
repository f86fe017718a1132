use ndarray::{s, Array2};
use rand::Rng;
use rayon::prelude::*;

use super::encoding::{predict_fmri, EncodingModel};
use super::prior::{nucleus_set, LanguagePrior, DEFAULT_TOP_P};
use super::rate::{predict_word_rate, WordRateModel};
use super::FmriRecord;
use crate::error::{Error, Result};
use crate::rng;
use crate::vocab::{timed_from_groups, TimedWord, WordId};

#[derive(Debug, Clone, PartialEq)]
pub struct BeamConfig {
    pub width: usize,
    pub top_p: f64,
    /// Distinct nucleus draws per candidate per new word.
    pub draws: usize,
    pub lm_weight: f64,
    pub brain_weight: f64,
    /// Cap on partial expansions held while filling one TR.
    pub max_expansions: usize,
}

impl Default for BeamConfig {
    fn default() -> Self {
        Self {
            width: 8,
            top_p: DEFAULT_TOP_P,
            draws: 4,
            lm_weight: 1.0,
            brain_weight: 1.0,
            max_expansions: 4096,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    /// Words decoded in each TR so far.
    pub groups: Vec<Vec<WordId>>,
    pub score: f64,
}

impl Candidate {
    pub fn words(&self) -> Vec<WordId> {
        self.groups.iter().flatten().copied().collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BeamState {
    pub width: usize,
    /// Best first.
    pub candidates: Vec<Candidate>,
}

fn history_key(history: &[WordId]) -> u64 {
    history.iter().fold(0x5EED, |h, w| rng::derive_seed(h, "history", u64::from(*w)))
}

/// Up to `draws` distinct words sampled without replacement from the
/// nucleus of the prior's next-word distribution, with their log
/// probabilities under the full distribution. The draw depends only on
/// `(seed, history)`.
pub fn candidate_words(
    prior: &dyn LanguagePrior,
    history: &[WordId],
    top_p: f64,
    draws: usize,
    seed: u64,
) -> Result<Vec<(WordId, f64)>> {
    let probs = prior.next_word_distribution(history);
    let mut pool = nucleus_set(&probs, top_p)?;
    let mut r = rng::indexed_stream(seed, "beam-draw", history_key(history));
    let mut out = Vec::with_capacity(draws.min(pool.len()));
    while out.len() < draws && !pool.is_empty() {
        let mass: f64 = pool.iter().map(|i| probs[*i]).sum();
        let mut u = r.random::<f64>() * mass;
        let mut pick = pool.len() - 1;
        for (n, i) in pool.iter().enumerate() {
            if u < probs[*i] {
                pick = n;
                break;
            }
            u -= probs[*i];
        }
        let w = pool.remove(pick);
        out.push((w as WordId, probs[w].ln()));
    }
    Ok(out)
}

/// Levenshtein distance between word sequences divided by the reference
/// length (the hypothesis length when the reference is empty).
pub fn word_error_rate(reference: &[WordId], hypothesis: &[WordId]) -> f64 {
    if reference.is_empty() {
        return if hypothesis.is_empty() { 0.0 } else { 1.0 };
    }
    let mut prev: Vec<usize> = (0..=hypothesis.len()).collect();
    for (i, r) in reference.iter().enumerate() {
        let mut cur = vec![i + 1; hypothesis.len() + 1];
        for (j, h) in hypothesis.iter().enumerate() {
            cur[j + 1] = (prev[j] + usize::from(r != h)).min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        prev = cur;
    }
    prev[hypothesis.len()] as f64 / reference.len() as f64
}

fn rank(a: &Candidate, b: &Candidate) -> std::cmp::Ordering {
    b.score.total_cmp(&a.score).then_with(|| a.words().cmp(&b.words()))
}

fn prune(mut pool: Vec<Candidate>, keep: usize) -> Vec<Candidate> {
    pool.sort_by(rank);
    pool.dedup_by(|a, b| a.groups == b.groups);
    pool.truncate(keep);
    pool
}

struct Scorer<'a> {
    enc: &'a EncodingModel,
    observed: &'a Array2<f64>,
    inv_two_var: Vec<f64>,
    tr_seconds: f64,
    weight: f64,
}

impl Scorer<'_> {
    /// Gaussian log-likelihood of voxel rows `lo..hi`.
    fn rows(&self, groups: &[Vec<WordId>], lo: usize, hi: usize) -> Result<f64> {
        if lo >= hi {
            return Ok(0.0);
        }
        let words = timed_from_groups(groups, self.tr_seconds);
        let pred = predict_fmri(self.enc, &words, self.observed.nrows(), self.tr_seconds)?;
        let diff = &pred.slice(s![lo..hi, ..]) - &self.observed.slice(s![lo..hi, ..]);
        let ll: f64 = diff
            .rows()
            .into_iter()
            .map(|row| row.iter().zip(&self.inv_two_var).map(|(d, k)| d * d * k).sum::<f64>())
            .sum();
        Ok(-self.weight * ll)
    }
}

/// Runs the beam over every TR of the record and returns the final beam.
pub fn beam_search(
    fmri: &FmriRecord,
    prior: &dyn LanguagePrior,
    enc: &EncodingModel,
    rate: &WordRateModel,
    cfg: &BeamConfig,
    seed: u64,
) -> Result<BeamState> {
    if cfg.width < 1 || cfg.draws < 1 {
        return Err(Error::InvalidArgument("beam width and draws must be at least 1".into()));
    }
    if fmri.n_voxels() == 0 {
        return Err(Error::Empty("fMRI record has no voxels".into()));
    }
    if fmri.n_voxels() != enc.n_voxels() {
        return Err(Error::Shape(format!(
            "record has {} voxels, encoding model {}",
            fmri.n_voxels(),
            enc.n_voxels()
        )));
    }
    if prior.vocab_size() != enc.table.vocab_size() {
        return Err(Error::Shape(format!(
            "prior vocabulary {} != embedding vocabulary {}",
            prior.vocab_size(),
            enc.table.vocab_size()
        )));
    }
    let counts = predict_word_rate(rate, fmri)?;
    let n_tr = fmri.n_tr();
    let scorer = Scorer {
        enc,
        observed: fmri.voxels(),
        inv_two_var: enc.noise_var.iter().map(|v| 0.5 / v).collect(),
        tr_seconds: fmri.tr_seconds(),
        weight: cfg.brain_weight,
    };
    // Voxel row r is final once every word within the kernel support of its
    // earliest-delayed feature row is known.
    let min_delay = *enc.delays.iter().min().expect("fitted delays");
    let final_end = |tr: usize| {
        if tr + 1 == n_tr {
            n_tr
        } else {
            (tr + 2 + min_delay).saturating_sub(enc.lobes).min(n_tr)
        }
    };

    let mut beam = vec![Candidate { groups: Vec::new(), score: 0.0 }];
    // Rows before the first delay see only zero padding.
    let mut scored_to = min_delay.min(n_tr);
    for (tr, &m) in counts.iter().enumerate() {
        let mut pool: Vec<Candidate> = beam
            .into_iter()
            .map(|mut c| {
                c.groups.push(Vec::new());
                c
            })
            .collect();
        for _ in 0..m {
            let expanded: Vec<Vec<Candidate>> = pool
                .par_iter()
                .map(|c| {
                    let history = c.words();
                    Ok(candidate_words(prior, &history, cfg.top_p, cfg.draws, seed)?
                        .into_iter()
                        .map(|(w, lp)| {
                            let mut next = c.clone();
                            next.groups.last_mut().expect("open TR").push(w);
                            next.score += cfg.lm_weight * lp;
                            next
                        })
                        .collect())
                })
                .collect::<Result<_>>()?;
            pool = expanded.into_iter().flatten().collect();
            if pool.len() > cfg.max_expansions {
                pool = prune(pool, cfg.max_expansions);
            }
        }
        let end = final_end(tr).max(scored_to);
        let brain: Vec<f64> =
            pool.par_iter().map(|c| scorer.rows(&c.groups, scored_to, end)).collect::<Result<_>>()?;
        for (c, b) in pool.iter_mut().zip(brain) {
            c.score += b;
        }
        // Until brain evidence arrives the LM alone cannot rank candidates
        // fairly, so pruning to the beam width waits for the first scored row.
        let keep = if end > scored_to { cfg.width } else { cfg.max_expansions };
        scored_to = end;
        beam = prune(pool, keep);
    }
    beam.truncate(cfg.width);
    if let Some(c) = beam.iter().find(|c| !c.score.is_finite()) {
        return Err(Error::NonFinite(format!("beam score {}", c.score)));
    }
    Ok(BeamState { width: cfg.width, candidates: beam })
}

/// Best decoded word stream, onsets spread uniformly inside each TR.
pub fn beam_decode(
    fmri: &FmriRecord,
    prior: &dyn LanguagePrior,
    enc: &EncodingModel,
    rate: &WordRateModel,
    cfg: &BeamConfig,
    seed: u64,
) -> Result<Vec<TimedWord>> {
    let state = beam_search(fmri, prior, enc, rate, cfg, seed)?;
    Ok(timed_from_groups(&state.candidates[0].groups, fmri.tr_seconds()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wer_counts_edits() {
        assert_eq!(word_error_rate(&[1, 2, 3, 4], &[1, 2, 3, 4]), 0.0);
        assert_eq!(word_error_rate(&[1, 2, 3, 4], &[1, 9, 3]), 0.5);
        assert_eq!(word_error_rate(&[1, 2], &[]), 1.0);
        assert_eq!(word_error_rate(&[], &[]), 0.0);
        assert_eq!(word_error_rate(&[5, 6, 7], &[6, 7, 5]), 2.0 / 3.0);
    }
}

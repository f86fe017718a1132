use fmri2ges::f2t::{
    beam_decode, beam_search, candidate_words, fit_encoding, fit_word_rate, predict_fmri, word_error_rate,
    BeamConfig, BigramPrior, EncodingConfig, EncodingModel, FmriRecord, LanguagePrior, RidgeConfig,
    WordRateModel, DEFAULT_LEADS,
};
use fmri2ges::synthdata::{make_f2t_record, World, WorldConfig};
use fmri2ges::vocab::{timed_from_groups, WordId};
use ndarray::{s, Array1};

struct Fitted {
    world: World,
    enc: EncodingModel,
    rate: WordRateModel,
    prior: BigramPrior,
}

fn fit(noise: f64) -> Fitted {
    let world = World::new(WorldConfig { seed: 21, fmri_noise: noise, ..WorldConfig::default() }).unwrap();
    let recs: Vec<_> = (0..40).map(|i| make_f2t_record(&world, 40, 1000 + i).unwrap()).collect();
    let runs: Vec<_> = recs.iter().map(|r| (r.chain.timed(2.0), r.fmri.clone())).collect();
    let enc = fit_encoding(&runs, &world.feature_table, &EncodingConfig::default()).unwrap();
    let counts: Vec<_> = recs.iter().map(|r| (r.fmri.clone(), r.chain.counts())).collect();
    let rate = fit_word_rate(&counts, &DEFAULT_LEADS, &RidgeConfig::default()).unwrap();
    let corpus: Vec<Vec<WordId>> = (0..2000)
        .map(|i| fmri2ges::synthdata::sample_word_chain(&world, fmri2ges::synthdata::Chain::Fmri, 50, 5000 + i).unwrap().words())
        .collect();
    let prior = BigramPrior::fit(&corpus, world.config.vocab).unwrap();
    Fitted { world, enc, rate, prior }
}

/// Puts all mass on the true word at each position.
struct Oracle {
    truth: Vec<WordId>,
    vocab: usize,
}

impl LanguagePrior for Oracle {
    fn vocab_size(&self) -> usize {
        self.vocab
    }

    fn next_word_distribution(&self, history: &[WordId]) -> Vec<f64> {
        let mut p = vec![0.0; self.vocab];
        p[self.truth.get(history.len()).copied().unwrap_or(0) as usize] = 1.0;
        p
    }
}

#[test]
fn oracle_prior_decodes_exactly() {
    let f = fit(0.0);
    for i in 0..5 {
        let rec = make_f2t_record(&f.world, 10, 77 + i).unwrap();
        let oracle = Oracle { truth: rec.chain.words(), vocab: 64 };
        let out = beam_decode(&rec.fmri, &oracle, &f.enc, &f.rate, &BeamConfig::default(), 3).unwrap();
        let words: Vec<WordId> = out.iter().map(|w| w.word).collect();
        assert_eq!(word_error_rate(&rec.chain.words(), &words), 0.0);
        assert_eq!(out, rec.chain.timed(2.0));
    }
}

#[test]
fn bigram_prior_decodes_noise_free_records() {
    let f = fit(0.0);
    let mut total = 0.0;
    for i in 0..6 {
        let rec = make_f2t_record(&f.world, 10, 300 + i).unwrap();
        let out = beam_decode(&rec.fmri, &f.prior, &f.enc, &f.rate, &BeamConfig::default(), 3).unwrap();
        let words: Vec<WordId> = out.iter().map(|w| w.word).collect();
        total += word_error_rate(&rec.chain.words(), &words);
    }
    assert!(total / 6.0 <= 0.1, "mean WER {}", total / 6.0);
}

#[test]
fn zero_rate_gives_empty_sequence() {
    let mut f = fit(0.0);
    f.rate.ridge.y_mean = Array1::from_elem(1, -1.0);
    f.rate.ridge.weights.fill(0.0);
    let rec = make_f2t_record(&f.world, 10, 5).unwrap();
    assert!(beam_decode(&rec.fmri, &f.prior, &f.enc, &f.rate, &BeamConfig::default(), 1).unwrap().is_empty());
}

#[test]
fn decoding_is_deterministic_and_scores_ordered() {
    let f = fit(0.5);
    let rec = make_f2t_record(&f.world, 10, 8).unwrap();
    let cfg = BeamConfig::default();
    let a = beam_search(&rec.fmri, &f.prior, &f.enc, &f.rate, &cfg, 4).unwrap();
    let b = beam_search(&rec.fmri, &f.prior, &f.enc, &f.rate, &cfg, 4).unwrap();
    assert_eq!(a, b);
    assert!(a.candidates.len() <= cfg.width);
    assert!(a.candidates.windows(2).all(|w| w[0].score >= w[1].score));
    assert!(a.candidates.iter().all(|c| c.score.is_finite() && c.score <= 0.0));
}

#[test]
fn scores_never_increase_with_length() {
    let f = fit(0.5);
    let rec = make_f2t_record(&f.world, 10, 8).unwrap();
    let mut last = 0.0;
    // Growing record prefixes replay the beam one more TR at a time.
    for n in 5..=rec.fmri.n_tr() {
        let cut = FmriRecord::new(rec.fmri.voxels().slice(s![..n, ..]).to_owned(), 2.0, rec.fmri.region()).unwrap();
        let cfg = BeamConfig { width: 1, ..BeamConfig::default() };
        let best = beam_search(&cut, &f.prior, &f.enc, &f.rate, &cfg, 4).unwrap().candidates[0].score;
        assert!(best <= 0.0);
        if n > 5 {
            assert!(best.is_finite());
        }
        last = best;
    }
    assert!(last < 0.0);
}

/// Independent greedy decoder: hypotheses are expanded exhaustively and
/// collapsed to the single best one whenever new voxel rows get scored.
fn greedy(rec: &FmriRecord, f: &Fitted, seed: u64) -> Vec<WordId> {
    let counts = fmri2ges::f2t::predict_word_rate(&f.rate, rec).unwrap();
    let n = rec.n_tr();
    let inv: Vec<f64> = f.enc.noise_var.iter().map(|v| 0.5 / v).collect();
    let loglik = |groups: &[Vec<WordId>], lo: usize, hi: usize| -> f64 {
        let pred = predict_fmri(&f.enc, &timed_from_groups(groups, 2.0), n, 2.0).unwrap();
        let mut total = 0.0;
        for r in lo..hi {
            for v in 0..pred.ncols() {
                let d = pred[[r, v]] - rec.voxels()[[r, v]];
                total += d * d * inv[v];
            }
        }
        -total
    };
    let flat = |g: &[Vec<WordId>]| g.iter().flatten().copied().collect::<Vec<WordId>>();
    let mut hyps: Vec<(Vec<Vec<WordId>>, f64)> = vec![(Vec::new(), 0.0)];
    let mut scored = 1;
    for (tr, &m) in counts.iter().enumerate() {
        for h in hyps.iter_mut() {
            h.0.push(Vec::new());
        }
        for _ in 0..m {
            let mut next = Vec::new();
            for (groups, score) in &hyps {
                for (w, l) in candidate_words(&f.prior, &flat(groups), 0.9, 4, seed).unwrap() {
                    let mut g = groups.clone();
                    g.last_mut().unwrap().push(w);
                    next.push((g, score + l));
                }
            }
            hyps = next;
        }
        let end = if tr + 1 == n { n } else { tr }.max(scored);
        if end > scored {
            for h in hyps.iter_mut() {
                h.1 += loglik(&h.0, scored, end);
            }
            let best = hyps
                .iter()
                .cloned()
                .reduce(|a, b| if b.1 > a.1 || (b.1 == a.1 && flat(&b.0) < flat(&a.0)) { b } else { a })
                .unwrap();
            hyps = vec![best];
            scored = end;
        }
    }
    flat(&hyps[0].0)
}

#[test]
fn width_one_matches_greedy() {
    let f = fit(0.5);
    for i in 0..4 {
        let rec = make_f2t_record(&f.world, 10, 40 + i).unwrap();
        let cfg = BeamConfig { width: 1, ..BeamConfig::default() };
        let beam: Vec<WordId> =
            beam_decode(&rec.fmri, &f.prior, &f.enc, &f.rate, &cfg, 6).unwrap().iter().map(|w| w.word).collect();
        assert_eq!(beam, greedy(&rec.fmri, &f, 6));
    }
}

#[test]
fn bad_arguments_rejected() {
    let f = fit(0.0);
    let rec = make_f2t_record(&f.world, 10, 5).unwrap();
    let cfg = BeamConfig { width: 0, ..BeamConfig::default() };
    assert!(beam_decode(&rec.fmri, &f.prior, &f.enc, &f.rate, &cfg, 1).is_err());
    let small = BigramPrior::fit(&[], 10).unwrap();
    assert!(beam_decode(&rec.fmri, &small, &f.enc, &f.rate, &BeamConfig::default(), 1).is_err());
    let wrong = FmriRecord::new(ndarray::Array2::zeros((5, 3)), 2.0, rec.fmri.region()).unwrap();
    assert!(beam_decode(&wrong, &f.prior, &f.enc, &f.rate, &BeamConfig::default(), 1).is_err());
}

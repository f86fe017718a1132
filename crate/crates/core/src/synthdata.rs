//! Seeded synthetic world: Markov word chains, gestures read out from word
//! latents, and fMRI produced through the same resampling/delay pipeline the
//! encoding model fits.

use ndarray::{Array1, Array2};
use rand::Rng;
use rayon::prelude::*;

use crate::align::{frame_aligned_words, frames_per_tr, run_lengths, DEFAULT_FPS};
use crate::diffusion::GestureClip;
use crate::error::{Error, Result};
use crate::f2t::{
    build_delayed_stimulus, lanczos_to_tr, FmriRecord, Region, DEFAULT_DELAYS, DEFAULT_LOBES,
    DEFAULT_TR_SECONDS,
};
use crate::rng;
use crate::skeleton::{rest_pose, FRAME_WIDTH};
use crate::vocab::{timed_from_groups, EmbeddingTable, TimedWord, WordId};

#[derive(Debug, Clone, PartialEq)]
pub struct WorldConfig {
    pub seed: u64,
    pub vocab: usize,
    pub latent_dim: usize,
    /// Width of the text-condition embedding table.
    pub text_dim: usize,
    /// Width of the word features the fMRI encoding model sees.
    pub embed_dim: usize,
    pub voxels: usize,
    pub region: Region,
    /// Record the region's reference voxel count in manifests.
    pub full_scale: bool,
    /// Nonzero entries per transition row.
    pub successors: usize,
    pub words_per_tr: f64,
    /// Gain of the per-TR word count on the current word's latent.
    pub rate_gain: f64,
    pub readout_scale: f64,
    pub beat_amplitude: f64,
    pub gesture_noise: f64,
    pub fmri_noise: f64,
    pub fps: f64,
    pub tr_seconds: f64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            vocab: 64,
            latent_dim: 8,
            text_dim: 32,
            embed_dim: 16,
            voxels: 64,
            region: Region::All,
            full_scale: false,
            successors: 4,
            words_per_tr: 2.0,
            rate_gain: 0.0,
            readout_scale: 0.15,
            beat_amplitude: 0.05,
            gesture_noise: 0.01,
            fmri_noise: 0.0,
            fps: DEFAULT_FPS,
            tr_seconds: DEFAULT_TR_SECONDS,
        }
    }
}

impl WorldConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.to_string()));
        if self.vocab == 0 || self.latent_dim == 0 || self.voxels == 0 {
            return bad("vocabulary, latent and voxel sizes must be positive");
        }
        if self.successors == 0 || self.successors > self.vocab {
            return bad("successors must be in 1..=vocab");
        }
        if !(self.words_per_tr >= 1.0) {
            return bad("words_per_tr must be at least 1");
        }
        for (name, v) in [
            ("readout_scale", self.readout_scale),
            ("beat_amplitude", self.beat_amplitude),
            ("gesture_noise", self.gesture_noise),
            ("fmri_noise", self.fmri_noise),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidArgument(format!("{name} must be >= 0, got {v}")));
            }
        }
        frames_per_tr(self.fps, self.tr_seconds).map(|_| ())
    }

    pub fn frames_per_tr(&self) -> usize {
        frames_per_tr(self.fps, self.tr_seconds).expect("validated")
    }

    /// Voxel count to report for the configured region.
    pub fn reported_voxels(&self) -> usize {
        if self.full_scale {
            self.region.reference_voxels().unwrap_or(self.voxels)
        } else {
            self.voxels
        }
    }
}

/// Every seeded matrix of the world. Two transition matrices realize the gap
/// between the language heard in the scanner and the language paired with
/// gestures.
#[derive(Debug, Clone, PartialEq)]
pub struct World {
    pub config: WorldConfig,
    pub latents: Array2<f64>,
    pub transition_fmri: Array2<f64>,
    pub transition_gesture: Array2<f64>,
    /// First-word distributions of the two chains.
    pub start_fmri: Array1<f64>,
    pub start_gesture: Array1<f64>,
    pub readout: Array2<f64>,
    pub beat_direction: Array1<f64>,
    pub rate_readout: Array1<f64>,
    pub text_table: EmbeddingTable,
    pub feature_table: EmbeddingTable,
    pub mixing: Array2<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Chain {
    Fmri,
    Gesture,
}

/// `vocab + 1` sparse rows; the last one is the start distribution.
fn sparse_transitions(vocab: usize, successors: usize, seed: u64, label: &str) -> Array2<f64> {
    let mut r = rng::stream(seed, label);
    let mut m = Array2::zeros((vocab + 1, vocab));
    for mut row in m.rows_mut() {
        let picks = rand::seq::index::sample(&mut r, vocab, successors);
        let weights: Vec<f64> = (0..successors).map(|_| 0.2 + r.random::<f64>()).collect();
        let total: f64 = weights.iter().sum();
        for (i, w) in picks.iter().zip(weights) {
            row[i] = w / total;
        }
    }
    m
}

/// Mean over rows of the total-variation distance between two transition
/// matrices.
pub fn transition_distance(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    let rows = a.nrows() as f64;
    a.rows()
        .into_iter()
        .zip(b.rows())
        .map(|(p, q)| 0.5 * p.iter().zip(q.iter()).map(|(x, y)| (x - y).abs()).sum::<f64>())
        .sum::<f64>()
        / rows
}

impl World {
    pub fn new(config: WorldConfig) -> Result<Self> {
        config.validate()?;
        let seed = config.seed;
        let (v, dz) = (config.vocab, config.latent_dim);
        let latents = rng::normal_matrix(&mut rng::stream(seed, "world-latents"), v, dz);
        let readout = rng::normal_matrix(&mut rng::stream(seed, "world-readout"), dz, FRAME_WIDTH)
            * (config.readout_scale / (dz as f64).sqrt());
        let beat = rng::normal_matrix(&mut rng::stream(seed, "world-beat"), 1, FRAME_WIDTH).row(0).to_owned();
        let beat_direction = &beat / beat.dot(&beat).sqrt().max(f64::MIN_POSITIVE);
        let rate_readout = rng::normal_matrix(&mut rng::stream(seed, "world-rate"), 1, dz).row(0).to_owned();
        let stimulus_width = DEFAULT_DELAYS.len() * config.embed_dim;
        let mixing = rng::normal_matrix(&mut rng::stream(seed, "world-mixing"), stimulus_width, config.voxels);
        let split = |m: Array2<f64>| (m.slice(ndarray::s![..v, ..]).to_owned(), m.row(v).to_owned());
        let (transition_fmri, start_fmri) = split(sparse_transitions(v, config.successors, seed, "world-chain-fmri"));
        let (transition_gesture, start_gesture) =
            split(sparse_transitions(v, config.successors, seed, "world-chain-gesture"));
        // Text embeddings carry the word latent through a random linear map, so
        // the gesture a word evokes is predictable from its embedding.
        let text_map = rng::normal_matrix(&mut rng::stream(seed, "world-text-table"), dz, config.text_dim)
            * (1.0 / ((dz * config.text_dim) as f64).sqrt());
        let text_table = EmbeddingTable::from_rows(latents.dot(&text_map))?;
        let world = Self {
            latents,
            transition_fmri,
            transition_gesture,
            start_fmri,
            start_gesture,
            readout,
            beat_direction,
            rate_readout,
            text_table,
            feature_table: EmbeddingTable::seeded(v, config.embed_dim, seed, "world-feature-table"),
            mixing,
            config,
        };
        Ok(world)
    }

    pub fn transitions(&self, chain: Chain) -> &Array2<f64> {
        match chain {
            Chain::Fmri => &self.transition_fmri,
            Chain::Gesture => &self.transition_gesture,
        }
    }

    pub fn start(&self, chain: Chain) -> &Array1<f64> {
        match chain {
            Chain::Fmri => &self.start_fmri,
            Chain::Gesture => &self.start_gesture,
        }
    }

    fn check_words<'a>(&self, words: impl IntoIterator<Item = &'a WordId>) -> Result<()> {
        match words.into_iter().find(|w| **w as usize >= self.config.vocab) {
            Some(w) => Err(Error::UnknownWord(*w)),
            None => Ok(()),
        }
    }

    /// Words spoken in the TR that starts with `word`.
    fn tr_count(&self, word: WordId) -> usize {
        let drive = self.latents.row(word as usize).dot(&self.rate_readout);
        (self.config.words_per_tr + self.config.rate_gain * drive).round().clamp(1.0, 8.0) as usize
    }

    /// Gesture readout of a word, before beat and noise.
    pub fn word_pose(&self, word: WordId) -> Array1<f64> {
        Array1::from(rest_pose()) + self.latents.row(word as usize).dot(&self.readout)
    }
}

/// A word chain grouped by TR.
#[derive(Debug, Clone, PartialEq)]
pub struct WordChain {
    pub groups: Vec<Vec<WordId>>,
}

impl WordChain {
    pub fn words(&self) -> Vec<WordId> {
        self.groups.iter().flatten().copied().collect()
    }

    pub fn counts(&self) -> Vec<usize> {
        self.groups.iter().map(Vec::len).collect()
    }

    pub fn n_tr(&self) -> usize {
        self.groups.len()
    }

    pub fn timed(&self, tr_seconds: f64) -> Vec<TimedWord> {
        timed_from_groups(&self.groups, tr_seconds)
    }
}

/// Markov chain of `length` words, grouped into TRs whose word count is a
/// fixed readout of the latent of the TR's first word.
pub fn sample_word_chain(world: &World, chain: Chain, length: usize, seed: u64) -> Result<WordChain> {
    if length == 0 {
        return Err(Error::InvalidArgument("chain length must be at least 1".into()));
    }
    let mut r = rng::stream(seed, "word-chain");
    let trans = world.transitions(chain);
    let draw = |row: ndarray::ArrayView1<f64>, r: &mut rng::StreamRng| {
        let mut u: f64 = r.random();
        for (i, p) in row.iter().enumerate() {
            if u < *p {
                return i as WordId;
            }
            u -= p;
        }
        // Rounding left u a hair above the last positive entry.
        row.iter().rposition(|p| *p > 0.0).expect("stochastic row") as WordId
    };
    let mut words = vec![draw(world.start(chain).view(), &mut r)];
    while words.len() < length {
        let next = draw(trans.row(*words.last().expect("non-empty") as usize), &mut r);
        words.push(next);
    }
    let mut groups = Vec::new();
    let mut pos = 0;
    while pos < words.len() {
        let take = world.tr_count(words[pos]).min(words.len() - pos);
        groups.push(words[pos..pos + take].to_vec());
        pos += take;
    }
    Ok(WordChain { groups })
}

/// Frame-aligned words and gestures for a chain.
pub fn render_gestures(world: &World, chain: &WordChain, seed: u64) -> Result<(Vec<WordId>, GestureClip)> {
    world.check_words(chain.groups.iter().flatten())?;
    let frames = frame_aligned_words(&chain.groups, world.config.frames_per_tr())?;
    let noise = rng::normal_matrix(&mut rng::stream(seed, "gesture-noise"), frames.len(), FRAME_WIDTH);
    let mut out = noise * world.config.gesture_noise;
    let mut row = 0;
    for (word, len) in run_lengths(&frames) {
        let pose = world.word_pose(word);
        for k in 0..len {
            let bump = world.config.beat_amplitude * (std::f64::consts::PI * k as f64 / len as f64).sin();
            let mut frame = out.row_mut(row);
            frame += &pose;
            frame.scaled_add(bump, &world.beat_direction);
            row += 1;
        }
    }
    Ok((frames, GestureClip::new(out)?))
}

/// Noise-free voxels: mixing applied to the delayed, resampled word features.
pub fn clean_fmri(world: &World, words: &[TimedWord], n_tr: usize) -> Result<Array2<f64>> {
    let feats = lanczos_to_tr(words, &world.feature_table, n_tr, world.config.tr_seconds, DEFAULT_LOBES)?;
    Ok(build_delayed_stimulus(&feats, &DEFAULT_DELAYS)?.dot(&world.mixing))
}

pub fn render_fmri(world: &World, chain: &WordChain, n_tr: usize, seed: u64) -> Result<FmriRecord> {
    world.check_words(chain.groups.iter().flatten())?;
    if n_tr < chain.n_tr() {
        return Err(Error::InvalidArgument(format!("{n_tr} TRs cannot hold {} word groups", chain.n_tr())));
    }
    let noise = rng::normal_matrix(&mut rng::stream(seed, "fmri-noise"), n_tr, world.config.voxels);
    let voxels = clean_fmri(world, &chain.timed(world.config.tr_seconds), n_tr)? + noise * world.config.fmri_noise;
    FmriRecord::new(voxels, world.config.tr_seconds, world.config.region)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitSizes {
    pub f2t_records: usize,
    pub f2t_words: usize,
    pub t2g_records: usize,
    pub t2g_words: usize,
    pub unpaired_records: usize,
    pub unpaired_words: usize,
    pub corpus_sequences: usize,
    pub corpus_words: usize,
}

impl Default for SplitSizes {
    fn default() -> Self {
        Self {
            f2t_records: 40,
            f2t_words: 40,
            t2g_records: 24,
            t2g_words: 24,
            unpaired_records: 16,
            unpaired_words: 12,
            corpus_sequences: 2000,
            corpus_words: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct F2tRecord {
    pub chain: WordChain,
    pub fmri: FmriRecord,
}

#[derive(Debug, Clone, PartialEq)]
pub struct T2gRecord {
    pub chain: WordChain,
    pub frame_words: Vec<WordId>,
    pub gestures: GestureClip,
}

/// fMRI without paired text; `truth` is kept for oracle checks only.
#[derive(Debug, Clone, PartialEq)]
pub struct UnpairedRecord {
    pub fmri: FmriRecord,
    pub truth: WordChain,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Datasets {
    pub seed: u64,
    pub sizes: SplitSizes,
    pub paired_f2t: Vec<F2tRecord>,
    pub paired_t2g: Vec<T2gRecord>,
    pub unpaired_fmri: Vec<UnpairedRecord>,
    /// Text-only sequences in the scanner language, for the language prior.
    pub corpus: Vec<Vec<WordId>>,
}

fn record_seed(seed: u64, split: &str, i: usize) -> u64 {
    rng::derive_seed(seed, split, i as u64)
}

pub fn make_f2t_record(world: &World, words: usize, seed: u64) -> Result<F2tRecord> {
    let chain = sample_word_chain(world, Chain::Fmri, words, seed)?;
    let fmri = render_fmri(world, &chain, chain.n_tr(), seed)?;
    Ok(F2tRecord { chain, fmri })
}

pub fn make_t2g_record(world: &World, words: usize, seed: u64) -> Result<T2gRecord> {
    let chain = sample_word_chain(world, Chain::Gesture, words, seed)?;
    let (frame_words, gestures) = render_gestures(world, &chain, seed)?;
    Ok(T2gRecord { chain, frame_words, gestures })
}

/// All splits, each record generated from its own derived seed.
pub fn make_datasets(world: &World, sizes: &SplitSizes, seed: u64) -> Result<Datasets> {
    let f2t = (0..sizes.f2t_records)
        .into_par_iter()
        .map(|i| make_f2t_record(world, sizes.f2t_words, record_seed(seed, "paired-f2t", i)))
        .collect::<Result<Vec<_>>>()?;
    let t2g = (0..sizes.t2g_records)
        .into_par_iter()
        .map(|i| make_t2g_record(world, sizes.t2g_words, record_seed(seed, "paired-t2g", i)))
        .collect::<Result<Vec<_>>>()?;
    let unpaired = (0..sizes.unpaired_records)
        .into_par_iter()
        .map(|i| {
            let rec = make_f2t_record(world, sizes.unpaired_words, record_seed(seed, "unpaired", i))?;
            Ok(UnpairedRecord { fmri: rec.fmri, truth: rec.chain })
        })
        .collect::<Result<Vec<_>>>()?;
    let corpus = (0..sizes.corpus_sequences)
        .into_par_iter()
        .map(|i| {
            Ok(sample_word_chain(world, Chain::Fmri, sizes.corpus_words, record_seed(seed, "corpus", i))?.words())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Datasets {
        seed,
        sizes: sizes.clone(),
        paired_f2t: f2t,
        paired_t2g: t2g,
        unpaired_fmri: unpaired,
        corpus,
    })
}

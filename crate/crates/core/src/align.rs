//! Word and fMRI replication onto the gesture frame grid, and clip slicing.

use log::warn;
use ndarray::{s, Array2, Axis};

use crate::error::{Error, Result};
use crate::vocab::{WordId, SILENCE};

pub const DEFAULT_FPS: f64 = 15.0;
pub const DEFAULT_CLIP_LEN: usize = 64;
pub const DEFAULT_STRIDE: usize = 16;

/// Gesture frames covered by one TR, `ceil(fps * tr)`.
pub fn frames_per_tr(fps: f64, tr_seconds: f64) -> Result<usize> {
    if !(fps > 0.0 && fps.is_finite()) {
        return Err(Error::InvalidArgument(format!("fps must be positive, got {fps}")));
    }
    if !(tr_seconds > 0.0 && tr_seconds.is_finite()) {
        return Err(Error::InvalidArgument(format!("TR must be positive, got {tr_seconds}")));
    }
    // Guard against 15 * 2.0 landing a hair above 30.
    Ok((fps * tr_seconds - 1e-9).ceil() as usize)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Replication {
    pub frames: Vec<WordId>,
    /// Words that received no frames.
    pub dropped: usize,
}

/// Repeats each word `ceil(N / W)` times in order, cutting the run that
/// crosses frame `N` so exactly `N` frames are produced. Words left without
/// frames are counted in `dropped`. `W = 0` yields `N` silence tokens.
pub fn replicate_words(words: &[WordId], frames: usize) -> Result<Replication> {
    if frames == 0 {
        return Err(Error::InvalidArgument("a TR must span at least one frame".into()));
    }
    if words.is_empty() {
        return Ok(Replication { frames: vec![SILENCE; frames], dropped: 0 });
    }
    let run = frames.div_ceil(words.len());
    let mut out = Vec::with_capacity(frames);
    let mut dropped = 0;
    for w in words {
        let len = run.min(frames - out.len());
        if len == 0 {
            dropped += 1;
        }
        out.extend(std::iter::repeat_n(*w, len));
    }
    if dropped > 0 {
        warn!("{dropped} of {} words got no frames in a {frames}-frame TR", words.len());
    }
    Ok(Replication { frames: out, dropped })
}

/// Run lengths of consecutive equal ids.
pub fn run_lengths(frames: &[WordId]) -> Vec<(WordId, usize)> {
    let mut runs: Vec<(WordId, usize)> = Vec::new();
    for w in frames {
        match runs.last_mut() {
            Some((last, n)) if last == w => *n += 1,
            _ => runs.push((*w, 1)),
        }
    }
    runs
}

/// Concatenates per-TR word groups into one frame track.
pub fn frame_aligned_words(groups: &[Vec<WordId>], frames_per_tr: usize) -> Result<Vec<WordId>> {
    let mut out = Vec::with_capacity(groups.len() * frames_per_tr);
    for g in groups {
        out.extend(replicate_words(g, frames_per_tr)?.frames);
    }
    Ok(out)
}

/// Repeats every TR row `ceil(fps * tr)` times.
pub fn replicate_fmri(voxels: &Array2<f64>, tr_seconds: f64, fps: f64) -> Result<Array2<f64>> {
    let n = frames_per_tr(fps, tr_seconds)?;
    let mut out = Array2::zeros((voxels.nrows() * n, voxels.ncols()));
    for (i, row) in voxels.axis_iter(Axis(0)).enumerate() {
        for f in 0..n {
            out.row_mut(i * n + f).assign(&row);
        }
    }
    Ok(out)
}

/// Window start offsets `0, stride, 2*stride, ...` of full-length clips.
pub fn clip_offsets(total: usize, clip_len: usize, stride: usize) -> Result<Vec<usize>> {
    if clip_len == 0 || stride == 0 {
        return Err(Error::InvalidArgument("clip length and stride must be positive".into()));
    }
    if total < clip_len {
        return Err(Error::InvalidArgument(format!(
            "{total} frames cannot hold a {clip_len}-frame clip"
        )));
    }
    Ok((0..=(total - clip_len) / stride).map(|i| i * stride).collect())
}

/// Word, fMRI and gesture tracks sharing one frame grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameAlignedSequence {
    pub words: Vec<WordId>,
    pub fmri: Option<Array2<f64>>,
    pub gestures: Option<Array2<f64>>,
    pub fps: f64,
}

impl FrameAlignedSequence {
    pub fn new(
        words: Vec<WordId>,
        fmri: Option<Array2<f64>>,
        gestures: Option<Array2<f64>>,
        fps: f64,
    ) -> Result<Self> {
        if !(fps > 0.0) {
            return Err(Error::InvalidArgument("fps must be positive".into()));
        }
        let n = words.len();
        for (name, track) in [("fmri", &fmri), ("gestures", &gestures)] {
            if let Some(t) = track {
                if t.nrows() != n {
                    return Err(Error::Shape(format!(
                        "{name} track has {} frames, words have {n}",
                        t.nrows()
                    )));
                }
            }
        }
        Ok(Self { words, fmri, gestures, fps })
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn clips(&self, clip_len: usize, stride: usize) -> Result<Vec<FrameAlignedSequence>> {
        clip_offsets(self.len(), clip_len, stride)?
            .into_iter()
            .map(|o| {
                let cut = |m: &Array2<f64>| m.slice(s![o..o + clip_len, ..]).to_owned();
                FrameAlignedSequence::new(
                    self.words[o..o + clip_len].to_vec(),
                    self.fmri.as_ref().map(cut),
                    self.gestures.as_ref().map(cut),
                    self.fps,
                )
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn runs(words: &[WordId], n: usize) -> Vec<usize> {
        run_lengths(&replicate_words(words, n).unwrap().frames).iter().map(|r| r.1).collect()
    }

    #[test]
    fn two_words_per_two_second_tr() {
        let n = frames_per_tr(15.0, 2.0).unwrap();
        assert_eq!(n, 30);
        assert_eq!(runs(&[1, 2], n), vec![15, 15]);
        assert_eq!(runs(&[1], n), vec![30]);
        assert_eq!(runs(&[1, 2, 3, 4], n), vec![8, 8, 8, 6]);
    }

    #[test]
    fn silence_and_overflow() {
        let r = replicate_words(&[], 5).unwrap();
        assert_eq!(r.frames, vec![SILENCE; 5]);
        let r = replicate_words(&[1, 2, 3, 4], 2).unwrap();
        assert_eq!(r.frames, vec![1, 2]);
        assert_eq!(r.dropped, 2);
        assert!(replicate_words(&[1], 0).is_err());
    }

    proptest! {
        #[test]
        fn dedup_recovers_order_when_every_word_fits(w in 1usize..40, n in 1usize..120) {
            prop_assume!(w <= n && (w - 1) * n.div_ceil(w) < n);
            let words: Vec<WordId> = (0..w as u32).collect();
            let rep = replicate_words(&words, n).unwrap();
            prop_assert_eq!(rep.frames.len(), n);
            prop_assert_eq!(rep.dropped, 0);
            let order: Vec<WordId> = run_lengths(&rep.frames).into_iter().map(|r| r.0).collect();
            prop_assert_eq!(order, words);
        }
    }

    #[test]
    fn fmri_rows_repeat_exactly() {
        let v = Array2::from_shape_fn((3, 2), |(r, c)| 0.1 + r as f64 * 1.7 - c as f64 / 3.0);
        let out = replicate_fmri(&v, 2.0, 15.0).unwrap();
        assert_eq!(out.nrows(), 90);
        for f in 0..90 {
            assert_eq!(out.row(f), v.row(f / 30));
        }
        let one = replicate_fmri(&v.slice(s![0..1, ..]).to_owned(), 2.0, 15.0).unwrap();
        assert_eq!(one.nrows(), 30);
        assert!(replicate_fmri(&v, 2.0, 0.0).is_err());
    }

    #[test]
    fn clip_windows() {
        assert_eq!(clip_offsets(64, 64, 16).unwrap(), vec![0]);
        assert_eq!(clip_offsets(96, 64, 16).unwrap(), vec![0, 16, 32]);
        assert_eq!(clip_offsets(100, 64, 16).unwrap(), vec![0, 16, 32]);
        assert!(clip_offsets(63, 64, 16).is_err());

        let words: Vec<WordId> = (0..96).collect();
        let fmri = Array2::from_shape_fn((96, 3), |(r, _)| r as f64);
        let seq = FrameAlignedSequence::new(words, Some(fmri), None, 15.0).unwrap();
        let clips = seq.clips(64, 16).unwrap();
        assert_eq!(clips.len(), 3);
        for (i, c) in clips.iter().enumerate() {
            assert_eq!(c.len(), 64);
            assert_eq!(c.fmri.as_ref().unwrap().nrows(), 64);
            assert_eq!(c.words[0], (16 * i) as u32);
        }
        assert!(FrameAlignedSequence::new(vec![1, 2], Some(Array2::zeros((3, 1))), None, 15.0)
            .is_err());
    }
}

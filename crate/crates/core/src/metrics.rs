//! Evaluation measures over gesture clips: MAE, APE, PCK, FGD, beat
//! consistency and diversity, plus Pearson correlation.

use ndarray::{Array1, Array2, Axis};

use crate::diffusion::GestureClip;
use crate::error::{Error, Result};
use crate::linalg::{mean_and_covariance, sqrt_psd, symmetric_eigen};
use crate::skeleton::{LEFT_SHOULDER, NUM_KEYPOINTS, RIGHT_SHOULDER};

fn check_pair(a: &[GestureClip], b: &[GestureClip]) -> Result<()> {
    if a.is_empty() || a.len() != b.len() {
        return Err(Error::Shape(format!("clip sets of size {} and {}", a.len(), b.len())));
    }
    for (x, y) in a.iter().zip(b) {
        if x.frames().dim() != y.frames().dim() {
            return Err(Error::Shape(format!(
                "clip shapes {:?} and {:?}",
                x.frames().dim(),
                y.frames().dim()
            )));
        }
    }
    Ok(())
}

fn keypoint_errors<'a>(a: &'a GestureClip, b: &'a GestureClip) -> impl Iterator<Item = f64> + 'a {
    let (fa, fb) = (a.frames(), b.frames());
    (0..fa.nrows()).flat_map(move |f| {
        (0..NUM_KEYPOINTS).map(move |k| {
            let dx = fa[[f, 2 * k]] - fb[[f, 2 * k]];
            let dy = fa[[f, 2 * k + 1]] - fb[[f, 2 * k + 1]];
            dx.hypot(dy)
        })
    })
}

/// Mean absolute coordinate difference.
pub fn mae(a: &[GestureClip], b: &[GestureClip]) -> Result<f64> {
    check_pair(a, b)?;
    let mut sum = 0.0;
    let mut count = 0usize;
    for (x, y) in a.iter().zip(b) {
        sum += (x.frames() - y.frames()).mapv(f64::abs).sum();
        count += x.frames().len();
    }
    Ok(sum / count as f64)
}

/// Mean per-keypoint Euclidean distance.
pub fn ape(a: &[GestureClip], b: &[GestureClip]) -> Result<f64> {
    check_pair(a, b)?;
    let mut sum = 0.0;
    let mut count = 0usize;
    for (x, y) in a.iter().zip(b) {
        for e in keypoint_errors(x, y) {
            sum += e;
            count += 1;
        }
    }
    Ok(sum / count as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PckThreshold {
    /// Fraction of the reference frame's shoulder width.
    Relative(f64),
    Absolute(f64),
}

impl Default for PckThreshold {
    fn default() -> Self {
        PckThreshold::Relative(0.2)
    }
}

/// Shoulder widths below this fall back to an absolute threshold.
pub const DEGENERATE_SHOULDER: f64 = 1e-6;
pub const FALLBACK_THRESHOLD: f64 = 0.2;

fn frame_threshold(reference: &Array2<f64>, frame: usize, mode: PckThreshold) -> f64 {
    match mode {
        PckThreshold::Absolute(d) => d,
        PckThreshold::Relative(rho) => {
            let dx = reference[[frame, 2 * RIGHT_SHOULDER]] - reference[[frame, 2 * LEFT_SHOULDER]];
            let dy = reference[[frame, 2 * RIGHT_SHOULDER + 1]]
                - reference[[frame, 2 * LEFT_SHOULDER + 1]];
            let width = dx.hypot(dy);
            if width < DEGENERATE_SHOULDER {
                FALLBACK_THRESHOLD
            } else {
                rho * width
            }
        }
    }
}

/// Fraction of predicted keypoints within the threshold of the reference.
/// Not symmetric: `pred` is scored against `reference`.
pub fn pck(pred: &[GestureClip], reference: &[GestureClip], mode: PckThreshold) -> Result<f64> {
    check_pair(pred, reference)?;
    match mode {
        PckThreshold::Relative(v) | PckThreshold::Absolute(v) if !(v > 0.0 && v.is_finite()) => {
            return Err(Error::InvalidArgument(format!("PCK threshold {v} must be positive")));
        }
        _ => {}
    }
    let mut hits = 0usize;
    let mut count = 0usize;
    for (p, r) in pred.iter().zip(reference) {
        let errors: Vec<f64> = keypoint_errors(p, r).collect();
        for (f, frame_errors) in errors.chunks(NUM_KEYPOINTS).enumerate() {
            let thr = frame_threshold(r.frames(), f, mode);
            hits += frame_errors.iter().filter(|e| **e <= thr).count();
            count += frame_errors.len();
        }
    }
    Ok(hits as f64 / count as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureMode {
    /// Every frame is one 98-d sample.
    RawFrames,
    /// Frames projected onto the top `d` principal axes of both sets pooled.
    Pca(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FgdResult {
    pub value: f64,
    /// Set when a regularized covariance was still not positive definite.
    pub singular: bool,
}

pub const FGD_REGULARIZER: f64 = 1e-6;

/// Fréchet distance between Gaussian fits of two sample matrices (rows are
/// samples): `|μ1-μ2|² + Tr(Σ1 + Σ2 - 2 (Σ1^½ Σ2 Σ1^½)^½)`.
pub fn frechet_distance(a: &Array2<f64>, b: &Array2<f64>) -> Result<FgdResult> {
    if a.ncols() != b.ncols() {
        return Err(Error::Shape(format!("feature widths {} and {}", a.ncols(), b.ncols())));
    }
    let (mu1, mut s1) = mean_and_covariance(a)?;
    let (mu2, mut s2) = mean_and_covariance(b)?;
    for i in 0..s1.nrows() {
        s1[[i, i]] += FGD_REGULARIZER;
        s2[[i, i]] += FGD_REGULARIZER;
    }
    Ok(frechet_from_moments(&mu1, &s1, &mu2, &s2))
}

pub(crate) fn frechet_from_moments(
    mu1: &Array1<f64>,
    s1: &Array2<f64>,
    mu2: &Array1<f64>,
    s2: &Array2<f64>,
) -> FgdResult {
    let floor = 0.5 * FGD_REGULARIZER;
    let singular = symmetric_eigen(s1).0[0] < floor || symmetric_eigen(s2).0[0] < floor;
    let root1 = sqrt_psd(s1);
    let inner = root1.dot(s2).dot(&root1);
    let (values, _) = symmetric_eigen(&inner);
    let trace_root: f64 = values.iter().map(|v| v.max(0.0).sqrt()).sum();
    let diff = mu1 - mu2;
    let value = diff.dot(&diff) + s1.diag().sum() + s2.diag().sum() - 2.0 * trace_root;
    FgdResult { value, singular }
}

fn pooled_frames(clips: &[GestureClip]) -> Array2<f64> {
    let views: Vec<_> = clips.iter().map(|c| c.frames().view()).collect();
    ndarray::concatenate(Axis(0), &views).expect("equal widths")
}

/// Fréchet gesture distance between two clip sets.
pub fn fgd(a: &[GestureClip], b: &[GestureClip], mode: FeatureMode) -> Result<FgdResult> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::InvalidArgument("FGD needs at least two clips per set".into()));
    }
    let (fa, fb) = (pooled_frames(a), pooled_frames(b));
    match mode {
        FeatureMode::RawFrames => frechet_distance(&fa, &fb),
        FeatureMode::Pca(d) => {
            if d == 0 || d > fa.ncols() {
                return Err(Error::InvalidArgument(format!("PCA width {d} out of range")));
            }
            let both = ndarray::concatenate(Axis(0), &[fa.view(), fb.view()]).expect("widths");
            let (_, cov) = mean_and_covariance(&both)?;
            let (_, vectors) = symmetric_eigen(&cov);
            let top = vectors.slice(ndarray::s![.., vectors.ncols() - d..]).to_owned();
            frechet_distance(&fa.dot(&top), &fb.dot(&top))
        }
    }
}

/// Mean keypoint speed between consecutive frames.
pub fn frame_speeds(clip: &GestureClip) -> Vec<f64> {
    let f = clip.frames();
    (0..f.nrows().saturating_sub(1))
        .map(|i| {
            (0..NUM_KEYPOINTS)
                .map(|k| {
                    let dx = f[[i + 1, 2 * k]] - f[[i, 2 * k]];
                    let dy = f[[i + 1, 2 * k + 1]] - f[[i, 2 * k + 1]];
                    dx.hypot(dy)
                })
                .sum::<f64>()
                / NUM_KEYPOINTS as f64
        })
        .collect()
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Frames whose outgoing speed is a strict local minimum below the clip's
/// median speed.
pub fn kinematic_beats(clip: &GestureClip) -> Vec<usize> {
    let speeds = frame_speeds(clip);
    if speeds.len() < 3 {
        return Vec::new();
    }
    let med = median(&speeds);
    (1..speeds.len() - 1)
        .filter(|&i| speeds[i] < speeds[i - 1] && speeds[i] < speeds[i + 1] && speeds[i] < med)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BeatConsistency {
    pub score: f64,
    /// True when the clip had no kinematic beats (score reported as 0).
    pub no_beats: bool,
}

pub const DEFAULT_BC_SIGMA: f64 = 1.5;

/// Mean over kinematic beats of `exp(-d²/2σ²)`, `d` the frame distance to the
/// nearest rhythm onset.
pub fn beat_consistency(
    clip: &GestureClip,
    onsets: &[usize],
    sigma_frames: f64,
) -> Result<BeatConsistency> {
    if onsets.is_empty() {
        return Err(Error::Empty("beat consistency needs at least one onset".into()));
    }
    if !(sigma_frames > 0.0 && sigma_frames.is_finite()) {
        return Err(Error::InvalidArgument(format!("sigma {sigma_frames} must be positive")));
    }
    let beats = kinematic_beats(clip);
    Ok(beat_score(&beats, onsets, sigma_frames))
}

pub(crate) fn beat_score(beats: &[usize], onsets: &[usize], sigma: f64) -> BeatConsistency {
    if beats.is_empty() {
        return BeatConsistency { score: 0.0, no_beats: true };
    }
    let total: f64 = beats
        .iter()
        .map(|&b| {
            let d = onsets
                .iter()
                .map(|&o| (b as f64 - o as f64).abs())
                .fold(f64::INFINITY, f64::min);
            (-d * d / (2.0 * sigma * sigma)).exp()
        })
        .sum();
    BeatConsistency { score: total / beats.len() as f64, no_beats: false }
}

/// Mean pairwise L2 distance between flattened clips.
pub fn diversity(clips: &[GestureClip]) -> Result<f64> {
    if clips.len() < 2 {
        return Err(Error::InvalidArgument("diversity needs at least two clips".into()));
    }
    let mut sum = 0.0;
    let mut pairs = 0usize;
    for i in 0..clips.len() {
        for j in i + 1..clips.len() {
            if clips[i].frames().dim() != clips[j].frames().dim() {
                return Err(Error::Shape("diversity over clips of different shapes".into()));
            }
            sum += (clips[i].frames() - clips[j].frames()).mapv(|v| v * v).sum().sqrt();
            pairs += 1;
        }
    }
    Ok(sum / pairs as f64)
}

/// Pearson correlation; `None` when either side is constant.
pub fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    assert_eq!(a.len(), b.len(), "pearson inputs differ in length");
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma).powi(2);
        sbb += (y - mb).powi(2);
    }
    let denom = (saa * sbb).sqrt();
    if denom <= f64::EPSILON * n {
        None
    } else {
        Some(sab / denom)
    }
}

/// Knobs echoed into every report.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsConfig {
    pub pck: PckThreshold,
    pub bc_sigma: f64,
    pub fgd_features: FeatureMode,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self {
            pck: PckThreshold::default(),
            bc_sigma: DEFAULT_BC_SIGMA,
            fgd_features: FeatureMode::RawFrames,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub mae: f64,
    pub ape: f64,
    pub pck: f64,
    pub fgd: f64,
    pub bc: f64,
    pub diversity: f64,
    pub config: MetricsConfig,
    pub clips: usize,
    pub fgd_flag: Option<String>,
    pub bc_flag: Option<String>,
    pub diversity_flag: Option<String>,
    pub rhythm: &'static str,
}

impl MetricsReport {
    pub fn to_key_values(&self) -> Vec<(String, String)> {
        let pck = match self.config.pck {
            PckThreshold::Relative(r) => format!("relative:{r}"),
            PckThreshold::Absolute(d) => format!("absolute:{d}"),
        };
        let features = match self.config.fgd_features {
            FeatureMode::RawFrames => "raw-frames".to_string(),
            FeatureMode::Pca(d) => format!("pca:{d}"),
        };
        let mut kv = vec![
            ("mae".into(), format!("{}", self.mae)),
            ("ape".into(), format!("{}", self.ape)),
            ("pck".into(), format!("{}", self.pck)),
            ("fgd".into(), format!("{}", self.fgd)),
            ("bc".into(), format!("{}", self.bc)),
            ("diversity".into(), format!("{}", self.diversity)),
            ("config.pck_threshold".into(), pck),
            ("config.bc_sigma_frames".into(), format!("{}", self.config.bc_sigma)),
            ("config.fgd_features".into(), features),
            ("config.bc_rhythm".into(), self.rhythm.to_string()),
            ("config.clips".into(), format!("{}", self.clips)),
        ];
        for (name, flag) in
            [("fgd", &self.fgd_flag), ("bc", &self.bc_flag), ("diversity", &self.diversity_flag)]
        {
            if let Some(f) = flag {
                kv.push((format!("flag.{name}"), f.clone()));
            }
        }
        kv
    }
}

/// Scores `generated` against `reference`. `onsets` gives the rhythm track per
/// clip (word onset frames); without it, the reference clip's own kinematic
/// beats serve as the rhythm.
pub fn evaluate(
    reference: &[GestureClip],
    generated: &[GestureClip],
    onsets: Option<&[Vec<usize>]>,
    config: MetricsConfig,
) -> Result<MetricsReport> {
    check_pair(generated, reference)?;
    let (fgd_value, fgd_flag) = if reference.len() >= 2 {
        let r = fgd(generated, reference, config.fgd_features)?;
        (r.value.max(0.0), r.singular.then(|| "singular-covariance".to_string()))
    } else {
        (0.0, Some("needs-two-clips".to_string()))
    };
    let (diversity_value, diversity_flag) = if generated.len() >= 2 {
        (diversity(generated)?, None)
    } else {
        (0.0, Some("needs-two-clips".to_string()))
    };
    let mut bc_total = 0.0;
    let mut no_beats = 0;
    for (i, (g, r)) in generated.iter().zip(reference).enumerate() {
        let rhythm = match onsets {
            Some(o) => o.get(i).cloned().unwrap_or_default(),
            None => kinematic_beats(r),
        };
        let beats = kinematic_beats(g);
        let score = if rhythm.is_empty() {
            BeatConsistency { score: 0.0, no_beats: true }
        } else {
            beat_score(&beats, &rhythm, config.bc_sigma)
        };
        no_beats += usize::from(score.no_beats);
        bc_total += score.score;
    }
    Ok(MetricsReport {
        mae: mae(generated, reference)?,
        ape: ape(generated, reference)?,
        pck: pck(generated, reference, config.pck)?,
        fgd: fgd_value,
        bc: bc_total / generated.len() as f64,
        diversity: diversity_value,
        config,
        clips: generated.len(),
        fgd_flag,
        bc_flag: (no_beats > 0).then(|| format!("no-beats-in-{no_beats}-clips")),
        diversity_flag,
        rhythm: if onsets.is_some() { "word-onsets" } else { "reference-beats" },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use crate::skeleton::{rest_pose, FRAME_WIDTH};
    use approx::assert_abs_diff_eq;

    fn random_clips(seed: u64, n: usize, frames: usize) -> Vec<GestureClip> {
        let mut r = rng::stream(seed, "clips");
        (0..n)
            .map(|_| GestureClip::new(rng::normal_matrix(&mut r, frames, FRAME_WIDTH)).unwrap())
            .collect()
    }

    fn rest_clip(frames: usize) -> GestureClip {
        let pose = rest_pose();
        GestureClip::new(Array2::from_shape_fn((frames, FRAME_WIDTH), |(_, c)| pose[c])).unwrap()
    }

    #[test]
    fn identity_and_shift() {
        let a = random_clips(1, 3, 5);
        assert_eq!(mae(&a, &a).unwrap(), 0.0);
        assert_eq!(ape(&a, &a).unwrap(), 0.0);
        assert_eq!(pck(&a, &a, PckThreshold::default()).unwrap(), 1.0);
        let shifted: Vec<_> =
            a.iter().map(|c| GestureClip::new(c.frames() + 0.3).unwrap()).collect();
        assert_abs_diff_eq!(mae(&a, &shifted).unwrap(), 0.3, epsilon = 1e-12);

        let moved: Vec<_> = a
            .iter()
            .map(|c| {
                let mut f = c.frames().clone();
                for mut row in f.rows_mut() {
                    for k in 0..NUM_KEYPOINTS {
                        row[2 * k] += 3.0;
                        row[2 * k + 1] += 4.0;
                    }
                }
                GestureClip::new(f).unwrap()
            })
            .collect();
        assert_abs_diff_eq!(ape(&a, &moved).unwrap(), 5.0, epsilon = 1e-12);
        assert!(mae(&a, &a[..2]).is_err());
    }

    #[test]
    fn pck_half_split_and_far_errors() {
        let reference = vec![rest_clip(4)];
        let pose = rest_pose();
        let width = (pose[2 * RIGHT_SHOULDER] - pose[2 * LEFT_SHOULDER])
            .hypot(pose[2 * RIGHT_SHOULDER + 1] - pose[2 * LEFT_SHOULDER + 1]);
        let thr = 0.2 * width;
        // Shift 2 of 4 frames entirely beyond the threshold.
        let mut f = reference[0].frames().clone();
        for frame in 0..2 {
            for k in 0..NUM_KEYPOINTS {
                f[[frame, 2 * k]] += 2.0 * thr;
            }
        }
        let pred = vec![GestureClip::new(f).unwrap()];
        assert_abs_diff_eq!(pck(&pred, &reference, PckThreshold::default()).unwrap(), 0.5);

        let far = vec![GestureClip::new(reference[0].frames() + 10.0 * thr).unwrap()];
        assert_eq!(pck(&far, &reference, PckThreshold::default()).unwrap(), 0.0);
        assert!(pck(&far, &reference, PckThreshold::Relative(0.0)).is_err());
    }

    #[test]
    fn pck_degenerate_shoulders_use_absolute_fallback() {
        let zero = vec![GestureClip::new(Array2::zeros((2, FRAME_WIDTH))).unwrap()];
        let near = vec![GestureClip::new(Array2::from_elem((2, FRAME_WIDTH), 0.1)).unwrap()];
        // Keypoint error 0.1·√2 ≈ 0.141 ≤ 0.2.
        assert_eq!(pck(&near, &zero, PckThreshold::default()).unwrap(), 1.0);
        let far = vec![GestureClip::new(Array2::from_elem((2, FRAME_WIDTH), 0.15)).unwrap()];
        assert_eq!(pck(&far, &zero, PckThreshold::default()).unwrap(), 0.0);
    }

    #[test]
    fn fgd_identity_and_mean_shift() {
        let a = random_clips(2, 4, 30);
        assert_abs_diff_eq!(fgd(&a, &a, FeatureMode::RawFrames).unwrap().value, 0.0, epsilon = 1e-6);
        let d: Vec<f64> = (0..FRAME_WIDTH).map(|i| (i as f64 * 0.37).sin() * 0.5).collect();
        let dvec = Array1::from(d.clone());
        let b: Vec<_> = a
            .iter()
            .map(|c| GestureClip::new(c.frames() + &dvec.view().insert_axis(Axis(0))).unwrap())
            .collect();
        let expected: f64 = d.iter().map(|v| v * v).sum();
        assert_abs_diff_eq!(
            fgd(&a, &b, FeatureMode::RawFrames).unwrap().value,
            expected,
            epsilon = 1e-6
        );
        let ab = fgd(&a, &b, FeatureMode::Pca(5)).unwrap().value;
        let ba = fgd(&b, &a, FeatureMode::Pca(5)).unwrap().value;
        assert_abs_diff_eq!(ab, ba, epsilon = 1e-8);
        assert!(fgd(&a[..1], &b, FeatureMode::RawFrames).is_err());
    }

    // Speeds must be dyadic so cumulative positions difference back exactly.
    fn beat_clip(speeds: &[f64]) -> GestureClip {
        let mut f = Array2::zeros((speeds.len() + 1, FRAME_WIDTH));
        let mut x = 0.0;
        for (i, s) in speeds.iter().enumerate() {
            x += s;
            for k in 0..NUM_KEYPOINTS {
                f[[i + 1, 2 * k]] = x;
            }
        }
        GestureClip::new(f).unwrap()
    }

    #[test]
    fn beat_consistency_cases() {
        let mut speeds = vec![1.0; 20];
        speeds[7] = 0.125;
        speeds[14] = 0.25;
        let clip = beat_clip(&speeds);
        assert_eq!(kinematic_beats(&clip), vec![7, 14]);
        let bc = beat_consistency(&clip, &[7, 14], 1.5).unwrap();
        assert_eq!(bc.score, 1.0);

        let mut one = vec![1.0; 40];
        one[10] = 0.125;
        let clip = beat_clip(&one);
        let far = beat_consistency(&clip, &[25], 1.5).unwrap();
        // Distance 15 frames = 10σ.
        assert_abs_diff_eq!(far.score, (-50.0f64).exp(), epsilon = 1e-30);
        assert!(far.score < 1e-21);
        let near = beat_consistency(&clip, &[12], 2.0).unwrap();
        assert_abs_diff_eq!(near.score, (-0.5f64).exp(), epsilon = 1e-12);

        let flat = beat_clip(&[1.0; 10]);
        let none = beat_consistency(&flat, &[3], 1.5).unwrap();
        assert!(none.no_beats);
        assert_eq!(none.score, 0.0);
        assert!(beat_consistency(&flat, &[], 1.5).is_err());
    }

    #[test]
    fn diversity_cases() {
        let a = random_clips(3, 1, 4);
        assert_eq!(diversity(&[a[0].clone(), a[0].clone()]).unwrap(), 0.0);
        let mut f = a[0].frames().clone();
        f[[0, 0]] += 2.5;
        let b = GestureClip::new(f).unwrap();
        assert_abs_diff_eq!(diversity(&[a[0].clone(), b]).unwrap(), 2.5, epsilon = 1e-12);
        assert!(diversity(&a).is_err());
    }

    #[test]
    fn pearson_edge_cases() {
        assert_abs_diff_eq!(pearson(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]).unwrap(), 1.0);
        assert_abs_diff_eq!(pearson(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap(), -1.0);
        assert!(pearson(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]).is_none());
    }

    #[test]
    fn evaluate_self_is_perfect() {
        let a = random_clips(4, 3, 16);
        let r = evaluate(&a, &a, None, MetricsConfig::default()).unwrap();
        assert_eq!(r.mae, 0.0);
        assert_eq!(r.pck, 1.0);
        assert!(r.fgd.abs() < 1e-6);
        assert!(r.diversity > 0.0);
        assert!(r.to_key_values().iter().any(|(k, _)| k == "config.pck_threshold"));
    }
}

//! Static SVG filmstrips of gesture clips.

use std::fmt::Write as _;

use crate::diffusion::GestureClip;
use crate::error::{Error, Result};
use crate::skeleton::NUM_KEYPOINTS;

pub const DEFAULT_EVERY: usize = 8;
const PANEL: f64 = 200.0;
/// Pixels per unit of pose coordinates. Fixed so panels are comparable.
const SCALE: f64 = 150.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RenderConfig {
    pub every: usize,
}

impl Default for RenderConfig {
    fn default() -> Self {
        Self { every: DEFAULT_EVERY }
    }
}

/// Frames drawn for a clip of `len` frames: 0, k, 2k, ...
pub fn panel_frames(len: usize, every: usize) -> Vec<usize> {
    (0..len).step_by(every.max(1)).collect()
}

/// Screen position of a pose coordinate inside panel `i`. The origin maps to
/// the panel center and y grows upward.
pub fn project(i: usize, x: f64, y: f64) -> (f64, f64) {
    (PANEL * (i as f64 + 0.5) + SCALE * x, PANEL * 0.5 - SCALE * y)
}

pub fn render_svg(clip: &GestureClip, bones: &[(usize, usize)], cfg: &RenderConfig) -> Result<String> {
    if cfg.every == 0 {
        return Err(Error::InvalidArgument("frame stride must be positive".into()));
    }
    if let Some(&(a, b)) = bones.iter().find(|&&(a, b)| a >= NUM_KEYPOINTS || b >= NUM_KEYPOINTS) {
        return Err(Error::InvalidArgument(format!("bone ({a}, {b}) names a missing keypoint")));
    }
    let frames = clip.frames();
    let picks = panel_frames(clip.len(), cfg.every);
    let width = PANEL * picks.len().max(1) as f64;
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{PANEL:.0}" viewBox="0 0 {width:.0} {PANEL:.0}">"#
    );
    let _ = writeln!(svg, r##"<rect width="{width:.0}" height="{PANEL:.0}" fill="#ffffff"/>"##);
    for (i, &f) in picks.iter().enumerate() {
        let row = frames.row(f);
        let pt = |k: usize| project(i, row[2 * k], row[2 * k + 1]);
        let _ = writeln!(svg, r#"<g id="frame-{f}">"#);
        let _ = writeln!(
            svg,
            r##"<rect x="{:.1}" y="0" width="{PANEL:.0}" height="{PANEL:.0}" fill="none" stroke="#cccccc"/>"##,
            PANEL * i as f64
        );
        for &(a, b) in bones {
            let ((x1, y1), (x2, y2)) = (pt(a), pt(b));
            let _ = writeln!(
                svg,
                r##"<line x1="{x1:.2}" y1="{y1:.2}" x2="{x2:.2}" y2="{y2:.2}" stroke="#1f4e79" stroke-width="1.5"/>"##
            );
        }
        for k in 0..NUM_KEYPOINTS {
            let (x, y) = pt(k);
            let _ = writeln!(svg, r##"<circle cx="{x:.2}" cy="{y:.2}" r="1.5" fill="#c0392b"/>"##);
        }
        let _ = writeln!(svg, r##"<text x="{:.1}" y="{:.1}" font-size="11" fill="#555555">{f}</text>"##, PANEL * i as f64 + 4.0, PANEL - 6.0);
        svg.push_str("</g>\n");
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

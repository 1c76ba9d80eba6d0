//! Concentric calibration marker detection in scene frames.

use serde::{Deserialize, Serialize};

use crate::detect::fit::rms_residual;
use crate::detect::{canny_with_thresholds, circumference, extract_contours, fit_ellipse};
use crate::image::{bilinear, intensity_span};
use crate::types::{Ellipse, GrayFrame, Point2};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MarkerKind {
    /// Dark centre: collect calibration samples.
    Collect,
    /// Light centre: end the calibration.
    Stop,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarkerDetection {
    /// Pixel coordinates.
    pub center: Point2,
    /// Outer radius in pixels.
    pub radius: f64,
    pub kind: MarkerKind,
}

/// Ring edges relative to the outer radius; the innermost only exists on
/// stop markers.
const RING_LEVELS: [f64; 4] = [1.0, 0.75, 0.5, 0.25];
const LEVEL_TOLERANCE: f64 = 0.08;
const MIN_CONTRAST: f32 = 40.0;
const MAX_RESIDUAL: f64 = 1.0;
const MIN_COVERAGE: f64 = 0.5;
const MIN_RADIUS: f64 = 4.0;

struct Ring {
    ellipse: Ellipse,
    weight: f64,
}

fn span(frame: &GrayFrame) -> f32 {
    let (lo, hi) = intensity_span(frame);
    hi as f32 - lo as f32
}

fn ring_fits(frame: &GrayFrame) -> Vec<Ring> {
    let s = span(frame);
    if s < MIN_CONTRAST {
        return Vec::new();
    }
    let edges = canny_with_thresholds(frame, 1.0, 0.5 * s, s);
    extract_contours(&edges)
        .into_iter()
        .filter(|c| c.len() >= 12)
        .filter_map(|c| {
            let e = fit_ellipse(&c.points).ok()?;
            if e.a < MIN_RADIUS || e.b < 0.5 * e.a || rms_residual(&e, &c.points) > MAX_RESIDUAL {
                return None;
            }
            let len = c.arc_length();
            (len >= MIN_COVERAGE * circumference(&e).ok()?).then_some(Ring {
                ellipse: e,
                weight: len,
            })
        })
        .collect()
}

fn mean_on_circle(frame: &GrayFrame, c: Point2, r: f64) -> Option<f64> {
    let mut acc = 0.0;
    for k in 0..16 {
        let ang = k as f64 * std::f64::consts::TAU / 16.0;
        let (x, y) = (c.x + r * ang.cos(), c.y + r * ang.sin());
        if x < 0.0 || y < 0.0 || x > (frame.width() - 1) as f64 || y > (frame.height() - 1) as f64 {
            return None;
        }
        acc += bilinear(frame, x, y);
    }
    Some(acc / 16.0)
}

/// Finds the largest concentric marker: at least three nested ring edges at
/// 1, 0.75 and 0.5 of the outer radius around a common centre.
pub fn detect_concentric_marker(frame: &GrayFrame) -> Option<MarkerDetection> {
    let mut rings = ring_fits(frame);
    rings.sort_by(|a, b| b.ellipse.a.total_cmp(&a.ellipse.a));
    for outer in &rings {
        let r0 = outer.ellipse.a;
        let tol = (0.08 * r0).max(1.5);
        let mut present = [false; 4];
        let (mut wsum, mut cx, mut cy) = (0.0, 0.0, 0.0);
        for ring in &rings {
            if ring.ellipse.center.distance(outer.ellipse.center) > tol {
                continue;
            }
            let rel = ring.ellipse.a / r0;
            let Some(level) = RING_LEVELS.iter().position(|l| (rel - l).abs() <= LEVEL_TOLERANCE) else {
                continue;
            };
            present[level] = true;
            wsum += ring.weight;
            cx += ring.weight * ring.ellipse.center.x;
            cy += ring.weight * ring.ellipse.center.y;
        }
        if !(present[0] && present[1] && present[2]) {
            continue;
        }
        let center = Point2::new(cx / wsum, cy / wsum);
        let dark = mean_on_circle(frame, center, 0.875 * r0)?;
        let light = mean_on_circle(frame, center, 0.625 * r0)?;
        if light - dark < MIN_CONTRAST as f64 {
            continue;
        }
        let mid = mean_on_circle(frame, center, 0.1 * r0)?;
        let kind = if mid > 0.5 * (dark + light) {
            MarkerKind::Stop
        } else {
            MarkerKind::Collect
        };
        return Some(MarkerDetection {
            center,
            radius: r0,
            kind,
        });
    }
    None
}

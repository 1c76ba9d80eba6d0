//! Hausdorff distance between ellipse outlines and detection-rate curves.

use serde::{Deserialize, Serialize};

use crate::detect::fit::point_distance;
use crate::types::Ellipse;

/// Initial number of samples per ellipse.
pub const INITIAL_SAMPLES: usize = 128;
/// Sampling stops when doubling changes the result by less than this fraction.
pub const CONVERGENCE: f64 = 0.005;
const MAX_SAMPLES: usize = 1 << 16;

/// Largest distance from a sampled point of `from` to the outline of `to`.
fn directed(from: &Ellipse, to: &Ellipse, n: usize) -> f64 {
    from.sample(n)
        .into_iter()
        .map(|p| point_distance(to, p))
        .fold(0.0, f64::max)
}

/// Symmetric Hausdorff distance at a fixed sampling density.
pub fn hausdorff_sampled(e1: &Ellipse, e2: &Ellipse, n: usize) -> f64 {
    directed(e1, e2, n).max(directed(e2, e1, n))
}

/// Symmetric Hausdorff distance between two ellipse outlines, in pixels.
///
/// One side is sampled parametrically, the distance to the other outline is
/// exact, and the density doubles until the value settles.
pub fn ellipse_hausdorff(e1: &Ellipse, e2: &Ellipse) -> f64 {
    if e1 == e2 {
        return 0.0;
    }
    let mut n = INITIAL_SAMPLES;
    let mut prev = hausdorff_sampled(e1, e2, n);
    while n < MAX_SAMPLES {
        n *= 2;
        let cur = hausdorff_sampled(e1, e2, n);
        let settled = (cur - prev).abs() <= CONVERGENCE * cur.max(prev) || cur.max(prev) < 1e-12;
        prev = cur;
        if settled {
            break;
        }
    }
    prev
}

/// Detection rate as a function of the error threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionRateCurve {
    pub thresholds: Vec<f64>,
    pub rates: Vec<f64>,
}

impl DetectionRateCurve {
    /// Rate at the largest listed threshold not above `t`, or 0.
    pub fn rate_at(&self, t: f64) -> f64 {
        self.thresholds
            .iter()
            .zip(&self.rates)
            .take_while(|(th, _)| **th <= t)
            .last()
            .map_or(0.0, |(_, r)| *r)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("threshold,rate\n");
        for (t, r) in self.thresholds.iter().zip(&self.rates) {
            s.push_str(&format!("{t},{r}\n"));
        }
        s
    }
}

/// Fraction of frames detected within each threshold. Thresholds are sorted
/// ascending; frames without a detection fail every threshold.
pub fn detection_rate_curve(errors: &[Option<f64>], thresholds: &[f64]) -> DetectionRateCurve {
    let mut ts = thresholds.to_vec();
    ts.sort_by(f64::total_cmp);
    let n = errors.len().max(1) as f64;
    let rates = ts
        .iter()
        .map(|&t| errors.iter().filter(|e| matches!(e, Some(d) if *d <= t)).count() as f64 / n)
        .collect();
    DetectionRateCurve {
        thresholds: ts,
        rates,
    }
}

/// Pairs detections with ground truth and builds the curve.
pub fn detection_rate_from_ellipses(
    results: &[(Option<Ellipse>, Ellipse)],
    thresholds: &[f64],
) -> DetectionRateCurve {
    let errors: Vec<Option<f64>> = results
        .iter()
        .map(|(d, t)| d.as_ref().map(|d| ellipse_hausdorff(d, t)))
        .collect();
    detection_rate_curve(&errors, thresholds)
}

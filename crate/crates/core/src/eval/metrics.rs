//! Spatial accuracy and precision in degrees of visual angle.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::{angular_distance, CameraIntrinsics, Point2};

/// Pairs further apart than this many degrees are outliers.
pub const DEFAULT_OUTLIER_LIMIT: f64 = 5.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("accuracy needs at least one pair")]
    NoPairs,
    #[error("precision needs a window with at least two samples")]
    NoWindows,
}

/// A gaze sample paired with the fixation target shown at the time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AngularPair {
    /// Scene pixels.
    pub gaze: Point2,
    pub target: Point2,
    /// Angular distance between the two, degrees.
    pub distance: f64,
    pub site: usize,
    pub timestamp: f64,
}

impl AngularPair {
    pub fn new(gaze: Point2, target: Point2, intr: &CameraIntrinsics, site: usize, timestamp: f64) -> Self {
        Self {
            gaze,
            target,
            distance: angular_distance(gaze, target, intr),
            site,
            timestamp,
        }
    }
}

/// Splits pairs into those within `limit` degrees and those strictly
/// beyond it, preserving order.
pub fn filter_outliers(pairs: &[AngularPair], limit: f64) -> (Vec<AngularPair>, Vec<AngularPair>) {
    pairs.iter().partition(|p| p.distance <= limit)
}

/// Mean angular offset, degrees.
pub fn accuracy(kept: &[AngularPair]) -> Result<f64, MetricError> {
    if kept.is_empty() {
        return Err(MetricError::NoPairs);
    }
    Ok(kept.iter().map(|p| p.distance).sum::<f64>() / kept.len() as f64)
}

/// Squared successive-sample distances (degrees squared) of the windows
/// with at least two samples.
fn successive_squares(windows: &[Vec<Point2>], intr: &CameraIntrinsics) -> Vec<f64> {
    windows
        .iter()
        .flat_map(|w| w.windows(2).map(|p| angular_distance(p[0], p[1], intr).powi(2)))
        .collect()
}

/// RMS of angular distances between successive gaze samples (scene pixels)
/// inside fixation windows, pooled over all windows.
pub fn precision(windows: &[Vec<Point2>], intr: &CameraIntrinsics) -> Result<f64, MetricError> {
    let sq = successive_squares(windows, intr);
    if sq.is_empty() {
        return Err(MetricError::NoWindows);
    }
    Ok((sq.iter().sum::<f64>() / sq.len() as f64).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiteReport {
    pub site: usize,
    pub target: Point2,
    pub accuracy: Option<f64>,
    pub precision: Option<f64>,
    pub n_used: usize,
    pub n_discarded: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyReport {
    /// Degrees.
    pub accuracy: f64,
    /// Pooled over all fixation windows, degrees.
    pub precision: f64,
    /// Mean of the per-site precisions, degrees.
    pub precision_site_mean: f64,
    pub n_used: usize,
    pub n_discarded: usize,
    pub sites: Vec<SiteReport>,
}

impl AccuracyReport {
    /// Aggregates pairs and fixation windows. `targets` lists every site,
    /// `windows` holds each window with its site.
    pub fn from_parts(
        pairs: &[AngularPair],
        windows: &[(usize, Vec<Point2>)],
        targets: &[Point2],
        intr: &CameraIntrinsics,
        limit: f64,
    ) -> Result<Self, MetricError> {
        let (kept, discarded) = filter_outliers(pairs, limit);
        let all_windows: Vec<Vec<Point2>> = windows.iter().map(|w| w.1.clone()).collect();
        let sites: Vec<SiteReport> = targets
            .iter()
            .enumerate()
            .map(|(site, &target)| {
                let k: Vec<AngularPair> = kept.iter().filter(|p| p.site == site).copied().collect();
                let w: Vec<Vec<Point2>> = windows
                    .iter()
                    .filter(|w| w.0 == site)
                    .map(|w| w.1.clone())
                    .collect();
                SiteReport {
                    site,
                    target,
                    accuracy: accuracy(&k).ok(),
                    precision: precision(&w, intr).ok(),
                    n_used: k.len(),
                    n_discarded: discarded.iter().filter(|p| p.site == site).count(),
                }
            })
            .collect();
        let per_site: Vec<f64> = sites.iter().filter_map(|s| s.precision).collect();
        Ok(Self {
            accuracy: accuracy(&kept)?,
            precision: precision(&all_windows, intr)?,
            precision_site_mean: per_site.iter().sum::<f64>() / per_site.len() as f64,
            n_used: kept.len(),
            n_discarded: discarded.len(),
            sites,
        })
    }

    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "accuracy  {:.4} deg", self.accuracy);
        let _ = writeln!(
            s,
            "precision {:.4} deg (site mean {:.4})",
            self.precision, self.precision_site_mean
        );
        let _ = writeln!(s, "pairs     {} used, {} discarded", self.n_used, self.n_discarded);
        let _ = writeln!(
            s,
            "{:>4} {:>8} {:>8} {:>10} {:>10} {:>6} {:>6}",
            "site", "x", "y", "acc deg", "prec deg", "used", "disc"
        );
        let opt = |v: Option<f64>| v.map_or_else(|| "-".to_owned(), |v| format!("{v:.4}"));
        for r in &self.sites {
            let _ = writeln!(
                s,
                "{:>4} {:>8.3} {:>8.3} {:>10} {:>10} {:>6} {:>6}",
                r.site,
                r.target.x,
                r.target.y,
                opt(r.accuracy),
                opt(r.precision),
                r.n_used,
                r.n_discarded
            );
        }
        s
    }
}

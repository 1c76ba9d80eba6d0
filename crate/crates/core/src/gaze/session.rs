//! Screen-marker calibration: pair each settled marker sighting with the
//! temporally nearest pupil datum.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gaze::calibrate::CalibrationPair;
use crate::gaze::marker::MarkerKind;
use crate::timing::pairing::{pair_by_time, DEFAULT_MAX_GAP};
use crate::types::{Point2, PupilDatum};

/// A calibration marker seen in one scene frame, scene-normalized.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarkerObservation {
    pub timestamp: f64,
    pub position: Point2,
    pub kind: MarkerKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SessionGating {
    /// Samples this soon after the marker moves are discarded, seconds.
    pub settle: f64,
    pub min_confidence: f64,
    pub max_gap: f64,
    /// Marker displacement that counts as motion, scene-normalized.
    pub motion_threshold: f64,
    /// Largest distance from a marker to the site it is assigned to.
    pub site_radius: f64,
}

impl Default for SessionGating {
    fn default() -> Self {
        Self {
            settle: 0.3,
            min_confidence: 0.6,
            max_gap: DEFAULT_MAX_GAP,
            motion_threshold: 1e-3,
            site_radius: 0.05,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SessionError {
    #[error("no calibration sites given")]
    NoSites,
    #[error("no usable pairs for calibration sites {sites:?}")]
    NoPairs { sites: Vec<usize> },
    #[error("{0} timestamps are not sorted")]
    NotSorted(&'static str),
}

/// A settled marker sighting: index into the observations, the time its
/// position was first shown, and the fixation segment it belongs to.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SettledMarker {
    pub index: usize,
    pub onset: f64,
    pub segment: usize,
}

/// Collect-marker sightings at least `settle` seconds after the marker last
/// moved. Segments count marker positions from 0.
pub fn settled_markers(markers: &[MarkerObservation], gating: &SessionGating) -> Vec<SettledMarker> {
    let mut out = Vec::new();
    let mut last: Option<Point2> = None;
    let mut onset = 0.0;
    let mut segment = None::<usize>;
    for (i, m) in markers.iter().enumerate() {
        if m.kind != MarkerKind::Collect {
            last = None;
            continue;
        }
        let moved = last.is_none_or(|p| p.distance(m.position) > gating.motion_threshold);
        if moved {
            onset = m.timestamp;
            segment = Some(segment.map_or(0, |s| s + 1));
        }
        last = Some(m.position);
        if m.timestamp - onset >= gating.settle {
            out.push(SettledMarker {
                index: i,
                onset,
                segment: segment.expect("set on first sighting"),
            });
        }
    }
    out
}

fn is_sorted(ts: impl Iterator<Item = f64>) -> bool {
    let mut prev = f64::NEG_INFINITY;
    ts.into_iter().all(|t| {
        let ok = t >= prev;
        prev = t;
        ok
    })
}

/// Builds calibration pairs for `sites` (scene-normalized).
///
/// Marker sightings are assigned to the nearest site within
/// `gating.site_radius`; each site must end up with at least one pair.
pub fn screen_marker_session(
    sites: &[Point2],
    pupil: &[PupilDatum],
    markers: &[MarkerObservation],
    gating: &SessionGating,
) -> Result<Vec<CalibrationPair>, SessionError> {
    if sites.is_empty() {
        return Err(SessionError::NoSites);
    }
    if !is_sorted(pupil.iter().map(|p| p.timestamp)) {
        return Err(SessionError::NotSorted("pupil"));
    }
    if !is_sorted(markers.iter().map(|m| m.timestamp)) {
        return Err(SessionError::NotSorted("marker"));
    }
    let settled = settled_markers(markers, gating);
    let pupil_ts: Vec<f64> = pupil.iter().map(|p| p.timestamp).collect();
    let marker_ts: Vec<f64> = settled.iter().map(|s| markers[s.index].timestamp).collect();
    let mut counts = vec![0usize; sites.len()];
    let mut pairs = Vec::new();
    for (ai, bi) in pair_by_time(&pupil_ts, &marker_ts, gating.max_gap) {
        let p = &pupil[ai];
        if p.confidence < gating.min_confidence {
            continue;
        }
        let m = &markers[settled[bi].index];
        let nearest = sites
            .iter()
            .enumerate()
            .map(|(k, s)| (k, s.distance(m.position)))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .filter(|(_, d)| *d <= gating.site_radius);
        let Some((site, _)) = nearest else {
            continue;
        };
        counts[site] += 1;
        pairs.push(CalibrationPair {
            pupil: p.norm_pos,
            target: m.position,
            timestamp: m.timestamp,
        });
    }
    let missing: Vec<usize> = (0..sites.len()).filter(|&k| counts[k] == 0).collect();
    if !missing.is_empty() {
        return Err(SessionError::NoPairs { sites: missing });
    }
    Ok(pairs)
}

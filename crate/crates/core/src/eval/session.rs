//! End-to-end accuracy measurement on a simulated session: calibrate on
//! nine sites, then test on random and revisited sites.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eval::metrics::{AccuracyReport, AngularPair, MetricError, DEFAULT_OUTLIER_LIMIT};
use crate::gaze::calibrate::{calibrate, map_gaze, CalibrationError, CalibrationModel};
use crate::gaze::session::{screen_marker_session, settled_markers, MarkerObservation, SessionError, SessionGating};
use crate::synth::session::{simulate_session, EyeSceneRig, Phase, Protocol, SessionStreams};
use crate::timing::pairing::pair_by_time;
use crate::types::{CameraIntrinsics, GazeDatum, Point2};

pub const DEFAULT_DEGREE: usize = 2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("calibration session: {0}")]
    Session(#[from] SessionError),
    #[error("calibration: {0}")]
    Calibration(#[from] CalibrationError),
    #[error("metrics: {0}")]
    Metric(#[from] MetricError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalSettings {
    pub degree: usize,
    pub gating: SessionGating,
    pub outlier_limit: f64,
}

impl Default for EvalSettings {
    fn default() -> Self {
        Self {
            degree: DEFAULT_DEGREE,
            gating: SessionGating::default(),
            outlier_limit: DEFAULT_OUTLIER_LIMIT,
        }
    }
}

/// Scores mapped gaze against the test markers.
///
/// Each settled marker sighting is paired with the nearest gaze sample;
/// the marker's fixation segment is the site. Precision windows are runs of
/// consecutive confident gaze samples inside each settled segment.
pub fn score_test(
    gaze: &[GazeDatum],
    markers: &[MarkerObservation],
    scene: &CameraIntrinsics,
    settings: &EvalSettings,
) -> Result<AccuracyReport, EvalError> {
    let g = &settings.gating;
    let settled = settled_markers(markers, g);
    let mut targets: Vec<Point2> = Vec::new();
    let mut spans: Vec<(f64, f64)> = Vec::new();
    for s in &settled {
        let m = &markers[s.index];
        if s.segment >= targets.len() {
            targets.resize(s.segment + 1, m.position);
            spans.resize(s.segment + 1, (f64::INFINITY, f64::NEG_INFINITY));
        }
        let span = &mut spans[s.segment];
        span.0 = span.0.min(m.timestamp);
        span.1 = span.1.max(m.timestamp);
    }

    let gaze_ts: Vec<f64> = gaze.iter().map(|d| d.timestamp).collect();
    let marker_ts: Vec<f64> = settled.iter().map(|s| markers[s.index].timestamp).collect();
    let px = |p: Point2| scene.pixel_from_norm(p);
    let pairs: Vec<AngularPair> = pair_by_time(&gaze_ts, &marker_ts, g.max_gap)
        .into_iter()
        .filter(|&(ai, _)| gaze[ai].confidence() >= g.min_confidence)
        .map(|(ai, bi)| {
            let m = &markers[settled[bi].index];
            AngularPair::new(px(gaze[ai].norm_pos), px(m.position), scene, settled[bi].segment, m.timestamp)
        })
        .collect();

    let mut windows: Vec<(usize, Vec<Point2>)> = Vec::new();
    for (site, &(t0, t1)) in spans.iter().enumerate() {
        let mut run: Vec<Point2> = Vec::new();
        // half a frame of slack so the samples bracketing the sightings count
        let slack = 0.5 * g.max_gap;
        for d in gaze.iter().filter(|d| d.timestamp >= t0 - slack && d.timestamp <= t1 + slack) {
            if d.confidence() >= g.min_confidence {
                run.push(px(d.norm_pos));
            } else if !run.is_empty() {
                windows.push((site, std::mem::take(&mut run)));
            }
        }
        if !run.is_empty() {
            windows.push((site, run));
        }
    }
    Ok(AccuracyReport::from_parts(
        &pairs,
        &windows,
        &targets,
        scene,
        settings.outlier_limit,
    )?)
}

/// Calibrates from the calibration phase of `streams`.
pub fn calibrate_session(
    rig: &EyeSceneRig,
    streams: &SessionStreams,
    settings: &EvalSettings,
) -> Result<CalibrationModel, EvalError> {
    let markers = streams.markers_in(Phase::Calibration);
    let pairs = screen_marker_session(&rig.calibration_sites, &streams.pupil, &markers, &settings.gating)?;
    Ok(calibrate(&pairs, settings.degree)?)
}

/// Calibration, mapping and scoring of an already simulated session.
pub fn evaluate_session(
    rig: &EyeSceneRig,
    streams: &SessionStreams,
    settings: &EvalSettings,
) -> Result<AccuracyReport, EvalError> {
    let model = calibrate_session(rig, streams, settings)?;
    let gaze: Vec<GazeDatum> = streams.pupil.iter().map(|p| map_gaze(p, &model)).collect();
    let markers = streams.markers_in(Phase::Test);
    score_test(&gaze, &markers, &rig.scene, settings)
}

/// Simulates the full protocol on `rig` and reports accuracy and precision.
pub fn run_accuracy_session(rig: &EyeSceneRig) -> Result<AccuracyReport, EvalError> {
    let streams = simulate_session(rig, Protocol::Full);
    evaluate_session(rig, &streams, &EvalSettings::default())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noiseless_session_is_exact() {
        let r = run_accuracy_session(&EyeSceneRig::default()).unwrap();
        assert!(r.accuracy < 0.05, "{}", r.to_table());
        assert_eq!(r.precision, 0.0);
        assert_eq!(r.n_discarded, 0);
        assert_eq!(r.sites.len(), 19);
    }

    #[test]
    fn occluded_visit_loses_its_pairs() {
        let base = run_accuracy_session(&EyeSceneRig::default()).unwrap();
        let rig = EyeSceneRig {
            occluded_test_visits: vec![4],
            ..Default::default()
        };
        let r = run_accuracy_session(&rig).unwrap();
        assert_eq!(r.sites[4].n_used, 0);
        assert!(r.n_used < base.n_used);
        assert_eq!(r.n_used + base.sites[4].n_used, base.n_used);
    }
}

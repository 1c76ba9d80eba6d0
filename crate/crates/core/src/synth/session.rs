//! Simulated recording sessions: a subject fixating calibration and test
//! markers, seen by an eye camera and a scene camera.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::gaze::marker::MarkerKind;
use crate::gaze::session::MarkerObservation;
use crate::synth::scene::nine_point_sites;
use crate::timing::clock::ClockModel;
use crate::types::{CameraIntrinsics, Ellipse, Point2, PupilDatum};

/// Ground-truth map from eye-normalized pupil position to scene-normalized
/// gaze: a quadratic in the offset from the eye frame centre.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GazeTruth {
    pub gain: (f64, f64),
    /// Coefficient of `ux * uy` in the horizontal gaze coordinate.
    pub x_cross: f64,
    /// Coefficient of `uy^2` in the horizontal gaze coordinate.
    pub x_curve: f64,
    /// Coefficient of `ux^2` in the vertical gaze coordinate.
    pub y_curve: f64,
}

impl Default for GazeTruth {
    fn default() -> Self {
        // 2 scene pixels per eye pixel for 640x480 eye and 1280x720 scene frames
        Self {
            gain: (1.0, 2.0 * 480.0 / 720.0),
            x_cross: 0.3,
            x_curve: 0.2,
            y_curve: 0.25,
        }
    }
}

impl GazeTruth {
    pub fn forward(&self, p: Point2) -> Point2 {
        let (ux, uy) = (p.x - 0.5, p.y - 0.5);
        Point2::new(
            0.5 + self.gain.0 * ux + self.x_cross * ux * uy + self.x_curve * uy * uy,
            0.5 + self.gain.1 * uy + self.y_curve * ux * ux,
        )
    }

    /// Pupil position that looks at scene point `s`, by Newton iteration.
    pub fn inverse(&self, s: Point2) -> Point2 {
        let mut u = ((s.x - 0.5) / self.gain.0, (s.y - 0.5) / self.gain.1);
        for _ in 0..50 {
            let f = self.forward(Point2::new(u.0 + 0.5, u.1 + 0.5));
            let (rx, ry) = (f.x - s.x, f.y - s.y);
            let j11 = self.gain.0 + self.x_cross * u.1;
            let j12 = self.x_cross * u.0 + 2.0 * self.x_curve * u.1;
            let j21 = 2.0 * self.y_curve * u.0;
            let j22 = self.gain.1;
            let det = j11 * j22 - j12 * j21;
            let dx = (rx * j22 - ry * j12) / det;
            let dy = (ry * j11 - rx * j21) / det;
            u = (u.0 - dx, u.1 - dy);
            if dx.abs().max(dy.abs()) < 1e-16 {
                break;
            }
        }
        Point2::new(u.0 + 0.5, u.1 + 0.5)
    }
}

/// Simulated subject behaviour.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectModel {
    /// Delay between a marker jump and the eye following it, seconds.
    pub saccade_latency: f64,
    /// Stationary sd of pupil-centre noise per axis, eye pixels.
    pub pupil_noise_sd: f64,
    /// Correlation time of the pupil-centre noise, seconds.
    pub pupil_noise_tau: f64,
    /// Mean blinks per second.
    pub blink_rate: f64,
    /// Range of blink durations, seconds.
    pub blink_duration: (f64, f64),
    /// Blinks added on top of the random ones: (start, duration).
    pub scripted_blinks: Vec<(f64, f64)>,
    /// Headset slip, eye-normalized units per second.
    pub drift: (f64, f64),
}

impl Default for SubjectModel {
    fn default() -> Self {
        Self {
            saccade_latency: 0.2,
            pupil_noise_sd: 0.0,
            pupil_noise_tau: 1.5,
            blink_rate: 0.0,
            blink_duration: (0.1, 0.3),
            scripted_blinks: Vec::new(),
            drift: (0.0, 0.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    Calibration,
    AccuracyTest,
    /// Calibration, a stop marker, then the accuracy test.
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Calibration,
    Stop,
    Test,
}

/// One marker placement in the schedule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SiteVisit {
    pub phase: Phase,
    /// Index within the phase.
    pub site: usize,
    pub target: Point2,
    pub start: f64,
    pub end: f64,
}

/// Eye and scene cameras, the subject, and the marker protocol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EyeSceneRig {
    pub eye: CameraIntrinsics,
    pub scene: CameraIntrinsics,
    pub truth: GazeTruth,
    pub subject: SubjectModel,
    pub eye_rate: f64,
    pub scene_rate: f64,
    /// Eye exposures start this long after scene exposures, seconds.
    pub eye_phase: f64,
    pub eye_clock: ClockModel,
    pub scene_clock: ClockModel,
    /// Time each marker stays in place, seconds.
    pub dwell: f64,
    pub stop_duration: f64,
    pub calibration_sites: Vec<Point2>,
    pub random_test_sites: usize,
    /// Range of the random test sites per axis, scene-normalized.
    pub test_area: (f64, f64),
    /// Test visits (indices into the test schedule) during which the pupil
    /// cannot be detected.
    pub occluded_test_visits: Vec<usize>,
    /// Eye-pixel radius of the simulated pupil.
    pub pupil_radius: f64,
    pub seed: u64,
}

impl Default for EyeSceneRig {
    fn default() -> Self {
        Self {
            eye: CameraIntrinsics::default_eye(),
            scene: CameraIntrinsics::default_scene(),
            truth: GazeTruth::default(),
            subject: SubjectModel::default(),
            eye_rate: 30.0,
            scene_rate: 30.0,
            eye_phase: 0.004,
            eye_clock: ClockModel::hardware(),
            scene_clock: ClockModel::hardware(),
            dwell: 1.5,
            stop_duration: 0.5,
            calibration_sites: nine_point_sites(),
            random_test_sites: 10,
            test_area: (0.1, 0.9),
            occluded_test_visits: Vec::new(),
            pupil_radius: 30.0,
            seed: 0,
        }
    }
}

/// Recorded streams of one simulated session, in one clock domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionStreams {
    pub protocol: Protocol,
    pub visits: Vec<SiteVisit>,
    pub pupil: Vec<PupilDatum>,
    pub markers: Vec<MarkerObservation>,
    /// Blink intervals (start, end).
    pub blinks: Vec<(f64, f64)>,
    pub duration: f64,
}

impl SessionStreams {
    pub fn visits_in(&self, phase: Phase) -> impl Iterator<Item = &SiteVisit> {
        self.visits.iter().filter(move |v| v.phase == phase)
    }

    /// Marker sightings of one phase.
    pub fn markers_in(&self, phase: Phase) -> Vec<MarkerObservation> {
        let spans: Vec<(f64, f64)> = self.visits_in(phase).map(|v| (v.start, v.end)).collect();
        let (Some(first), Some(last)) = (spans.first(), spans.last()) else {
            return Vec::new();
        };
        let (start, end) = (first.0, last.1);
        self.markers
            .iter()
            .filter(|m| m.timestamp >= start && m.timestamp < end)
            .copied()
            .collect()
    }
}

fn schedule(rig: &EyeSceneRig, protocol: Protocol, rng: &mut ChaCha8Rng) -> Vec<SiteVisit> {
    let mut visits = Vec::new();
    let mut t = 0.0;
    let mut push = |phase, site, target, len: f64, t: &mut f64| {
        visits.push(SiteVisit {
            phase,
            site,
            target,
            start: *t,
            end: *t + len,
        });
        *t += len;
    };
    if protocol != Protocol::AccuracyTest {
        for (k, s) in rig.calibration_sites.iter().enumerate() {
            push(Phase::Calibration, k, *s, rig.dwell, &mut t);
        }
    }
    if protocol == Protocol::Full {
        push(Phase::Stop, 0, Point2::new(0.5, 0.5), rig.stop_duration, &mut t);
    }
    if protocol != Protocol::Calibration {
        let (lo, hi) = rig.test_area;
        let random: Vec<Point2> = (0..rig.random_test_sites)
            .map(|_| Point2::new(rng.random_range(lo..hi), rng.random_range(lo..hi)))
            .collect();
        for (k, s) in random.iter().chain(&rig.calibration_sites).enumerate() {
            push(Phase::Test, k, *s, rig.dwell, &mut t);
        }
    }
    visits
}

fn visit_at(visits: &[SiteVisit], t: f64) -> Option<&SiteVisit> {
    visits.iter().find(|v| t >= v.start && t < v.end)
}

/// Gaussian process with exponential correlation, sampled exactly.
struct OrnsteinUhlenbeck {
    sd: f64,
    tau: f64,
    state: (f64, f64),
    last: Option<f64>,
}

impl OrnsteinUhlenbeck {
    fn sample(&mut self, t: f64, rng: &mut ChaCha8Rng) -> (f64, f64) {
        if self.sd == 0.0 {
            return (0.0, 0.0);
        }
        let mut n = || -> f64 { StandardNormal.sample(rng) };
        self.state = match self.last {
            None => (self.sd * n(), self.sd * n()),
            Some(prev) => {
                let rho = (-(t - prev) / self.tau).exp();
                let k = self.sd * (1.0 - rho * rho).sqrt();
                (rho * self.state.0 + k * n(), rho * self.state.1 + k * n())
            }
        };
        self.last = Some(t);
        self.state
    }
}

const STREAM_SCHEDULE: u64 = 1;
const STREAM_NOISE: u64 = 2;
const STREAM_BLINKS: u64 = 3;
const STREAM_EYE_CLOCK: u64 = 4;
const STREAM_SCENE_CLOCK: u64 = 5;

fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

/// Runs the marker protocol and records pupil and marker streams.
pub fn simulate_session(rig: &EyeSceneRig, protocol: Protocol) -> SessionStreams {
    let visits = schedule(rig, protocol, &mut rng(rig.seed, STREAM_SCHEDULE));
    let duration = visits.last().map_or(0.0, |v| v.end);

    let mut blinks: Vec<(f64, f64)> = Vec::new();
    let s = &rig.subject;
    if s.blink_rate > 0.0 {
        let mut r = rng(rig.seed, STREAM_BLINKS);
        let gap = Exp::new(s.blink_rate).expect("positive rate");
        let mut t = gap.sample(&mut r);
        while t < duration {
            let len = r.random_range(s.blink_duration.0..=s.blink_duration.1);
            blinks.push((t, t + len));
            t += len + gap.sample(&mut r);
        }
    }
    blinks.extend(s.scripted_blinks.iter().map(|&(t, d)| (t, t + d)));
    blinks.sort_by(|a, b| a.0.total_cmp(&b.0));

    let mut noise = OrnsteinUhlenbeck {
        sd: s.pupil_noise_sd,
        tau: s.pupil_noise_tau,
        state: (0.0, 0.0),
        last: None,
    };
    let mut noise_rng = rng(rig.seed, STREAM_NOISE);
    let mut eye_clock = rig.eye_clock.stamper(rng(rig.seed, STREAM_EYE_CLOCK).random());
    let (ew, eh) = (rig.eye.width(), rig.eye.height());
    let mut pupil = Vec::new();
    let mut k = 0usize;
    loop {
        let t = rig.eye_phase + k as f64 / rig.eye_rate;
        if t >= duration {
            break;
        }
        k += 1;
        let looked_at = visit_at(&visits, (t - s.saccade_latency).max(0.0)).unwrap_or(&visits[0]);
        let (nx, ny) = noise.sample(t, &mut noise_rng);
        let base = rig.truth.inverse(looked_at.target);
        let pos = Point2::new(
            base.x + s.drift.0 * t + nx / ew,
            base.y + s.drift.1 * t + ny / eh,
        );
        let blinking = blinks.iter().any(|&(b0, b1)| t >= b0 && t < b1);
        let occluded = visit_at(&visits, t)
            .is_some_and(|v| v.phase == Phase::Test && rig.occluded_test_visits.contains(&v.site));
        let confidence = if blinking || occluded { 0.0 } else { 1.0 };
        pupil.push(PupilDatum {
            ellipse: Ellipse::circle(rig.eye.pixel_from_norm(pos), rig.pupil_radius),
            norm_pos: pos,
            confidence,
            timestamp: eye_clock.stamp(t),
        });
    }

    let mut scene_clock = rig.scene_clock.stamper(rng(rig.seed, STREAM_SCENE_CLOCK).random());
    let mut markers = Vec::new();
    let mut j = 0usize;
    loop {
        let t = j as f64 / rig.scene_rate;
        if t >= duration {
            break;
        }
        j += 1;
        if let Some(v) = visit_at(&visits, t) {
            markers.push(MarkerObservation {
                timestamp: scene_clock.stamp(t),
                position: v.target,
                kind: if v.phase == Phase::Stop {
                    MarkerKind::Stop
                } else {
                    MarkerKind::Collect
                },
            });
        }
    }

    SessionStreams {
        protocol,
        visits,
        pupil,
        markers,
        blinks,
        duration,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn truth_inverse_round_trips() {
        let g = GazeTruth::default();
        for &(x, y) in &[(0.1, 0.1), (0.5, 0.5), (0.9, 0.2), (0.3, 0.85)] {
            let s = Point2::new(x, y);
            let back = g.forward(g.inverse(s));
            assert!(back.distance(s) < 1e-14, "{s:?} {back:?}");
        }
    }

    #[test]
    fn schedule_follows_protocol() {
        let rig = EyeSceneRig::default();
        let s = simulate_session(&rig, Protocol::Full);
        assert_eq!(s.visits_in(Phase::Calibration).count(), 9);
        assert_eq!(s.visits_in(Phase::Stop).count(), 1);
        assert_eq!(s.visits_in(Phase::Test).count(), 19);
        assert!((s.duration - (28.0 * 1.5 + 0.5)).abs() < 1e-12);
        assert_eq!(s.markers.len(), (s.duration * 30.0).ceil() as usize);
    }

    #[test]
    fn seeded_sessions_repeat() {
        let rig = EyeSceneRig {
            subject: SubjectModel {
                pupil_noise_sd: 2.0,
                blink_rate: 0.3,
                ..Default::default()
            },
            seed: 4,
            ..Default::default()
        };
        assert_eq!(simulate_session(&rig, Protocol::Full), simulate_session(&rig, Protocol::Full));
    }
}

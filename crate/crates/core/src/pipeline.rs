//! Live two-lane pipeline: eye frames are detected, mapped and published as
//! soon as they arrive, while scene frames are processed independently.
//!
//! Camera threads replay pre-rendered, encoded frames at their nominal
//! exposure times. Each lane records per-stage wall-clock durations.

use std::sync::{Arc, Condvar, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use crossbeam::channel::{bounded, Receiver, Sender};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::DetectorParams;
use crate::detect::detect;
use crate::gaze::calibrate::{map_gaze, CalibrationModel};
use crate::image::{read_pgm, write_pgm};
use crate::io::bus::{Bus, Topic};
use crate::surface::fiducial::detect_markers;
use crate::synth::eye::{render_eye_frame, EyeRig, PupilTrajectory};
use crate::synth::scene::{render_scene_frame, PlacedSurface, SceneContent, SceneRig};
use crate::surface::homography::Homography;
use crate::timing::clock::TimingError;
use crate::timing::latency::{FrameTimer, LatencyReport, Stage, StageDurations};
use crate::types::{Point2, StreamId};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("latency report: {0}")]
    Timing(#[from] TimingError),
    #[error("frame decode: {0}")]
    Decode(String),
    #[error("pipeline thread panicked")]
    Panicked,
}

/// When eye results are published.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PublishPolicy {
    /// Immediately after mapping.
    Recency,
    /// Only once the scene frame covering the eye exposure has arrived.
    Synchronized,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LiveConfig {
    pub eye_frames: usize,
    pub eye_rate: f64,
    /// Scene frames cover the eye run; 0 disables the scene lane.
    pub scene_rate: f64,
    /// Extra delay before a scene frame reaches the host, seconds.
    pub scene_delay: f64,
    /// Replay at exposure times; when false frames are sent back to back.
    pub paced: bool,
    pub policy: PublishPolicy,
    pub eye: EyeRig,
    pub scene: SceneRig,
    pub params: DetectorParams,
    pub model: CalibrationModel,
    /// Distinct frames rendered per lane and replayed cyclically.
    pub distinct_frames: usize,
}

impl Default for LiveConfig {
    fn default() -> Self {
        let eye = EyeRig {
            trajectory: PupilTrajectory::Orbit {
                center: Point2::new(320.0, 240.0),
                amplitude: (80.0, 50.0),
                period: (3.0, 4.0),
                a: 38.0,
                b: 32.0,
                theta: 0.4,
            },
            noise_sd: 3.0,
            glint_count: 1,
            seed: 17,
            ..Default::default()
        };
        Self {
            eye_frames: 120,
            eye_rate: 30.0,
            scene_rate: 15.0,
            scene_delay: 0.1,
            paced: true,
            policy: PublishPolicy::Recency,
            eye,
            scene: SceneRig {
                width: 640,
                height: 360,
                noise_sd: 2.0,
                seed: 17,
                ..Default::default()
            },
            params: DetectorParams::default(),
            model: CalibrationModel::identity(),
            distinct_frames: 30,
        }
    }
}

/// An eye datum's exposure time and publish instant, seconds from the run
/// start.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EyeEvent {
    pub exposure: f64,
    pub published: f64,
    pub detected: bool,
}

/// A scene frame's exposure interval and arrival instant, seconds from the
/// run start.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SceneEvent {
    pub exposure_start: f64,
    pub exposure_end: f64,
    pub arrived: f64,
    pub markers: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LiveReport {
    pub eye: LatencyReport,
    pub scene: Option<LatencyReport>,
    pub eye_events: Vec<EyeEvent>,
    pub scene_events: Vec<SceneEvent>,
    /// Wall-clock duration of the eye lane, seconds.
    pub eye_wall_time: f64,
}

impl LiveReport {
    /// Eye frames processed per second of eye-lane wall time.
    pub fn eye_throughput(&self) -> f64 {
        self.eye_events.len() as f64 / self.eye_wall_time
    }

    pub fn detection_fraction(&self) -> f64 {
        self.eye_events.iter().filter(|e| e.detected).count() as f64 / self.eye_events.len().max(1) as f64
    }

    /// Eye datums published after the scene frame covering their exposure
    /// had arrived, although the eye datum was ready first.
    pub fn recency_violations(&self) -> usize {
        self.eye_events
            .iter()
            .filter(|e| {
                self.scene_events
                    .iter()
                    .find(|s| e.exposure >= s.exposure_start && e.exposure < s.exposure_end)
                    .is_some_and(|s| e.published > s.arrived)
            })
            .count()
    }
}

struct Packet {
    index: usize,
    exposure: f64,
    sent: Instant,
    bytes: Arc<Vec<u8>>,
}

fn encode(frame: &crate::types::GrayFrame) -> Arc<Vec<u8>> {
    let mut buf = Vec::with_capacity(frame.pixels().len() + 32);
    write_pgm(&mut buf, frame).expect("writes to a Vec succeed");
    Arc::new(buf)
}

/// Sends `count` frames, exposure `k / rate`, available `delay` after the
/// exposure ends (or at once when not paced).
fn camera(
    start: Instant,
    frames: Vec<Arc<Vec<u8>>>,
    count: usize,
    rate: f64,
    delay: f64,
    paced: bool,
    tx: Sender<Packet>,
) {
    for index in 0..count {
        let exposure = index as f64 / rate;
        if paced {
            let due = start + Duration::from_secs_f64(exposure + 1.0 / rate + delay);
            if let Some(wait) = due.checked_duration_since(Instant::now()) {
                thread::sleep(wait);
            }
        }
        let packet = Packet {
            index,
            exposure,
            sent: Instant::now(),
            bytes: frames[index % frames.len()].clone(),
        };
        if tx.send(packet).is_err() {
            return;
        }
    }
}

/// Index of the last scene frame that has arrived, shared with the eye lane.
type Arrivals = Arc<(Mutex<Option<usize>>, Condvar)>;

fn eye_lane(
    cfg: &LiveConfig,
    start: Instant,
    rx: Receiver<Packet>,
    bus: &Bus,
    arrivals: &Arrivals,
) -> Result<(Vec<StageDurations>, Vec<EyeEvent>, f64), PipelineError> {
    let mut samples = Vec::with_capacity(cfg.eye_frames);
    let mut events = Vec::with_capacity(cfg.eye_frames);
    let mut first: Option<Instant> = None;
    for p in rx {
        let now = Instant::now();
        first.get_or_insert(now);
        let mut timer = FrameTimer::start();
        let ready = start + Duration::from_secs_f64(p.exposure + 1.0 / cfg.eye_rate);
        let readout = if cfg.paced {
            p.sent.saturating_duration_since(ready).as_secs_f64()
        } else {
            0.0
        };
        timer.add(Stage::Readout, readout);
        timer.add(Stage::Transfer, now.duration_since(p.sent).as_secs_f64());
        let mut frame = read_pgm(&p.bytes[..], StreamId::Eye).map_err(|e| PipelineError::Decode(e.to_string()))?;
        frame.timestamp = p.exposure;
        timer.mark(Stage::Decompress);
        let datum = detect(&frame, &cfg.params).map_err(|e| PipelineError::Decode(e.to_string()))?;
        timer.mark(Stage::Detect);
        let gaze = datum.map(|d| map_gaze(&d, &cfg.model));
        timer.mark(Stage::Map);
        if cfg.policy == PublishPolicy::Synchronized && cfg.scene_rate > 0.0 {
            let needed = (p.exposure * cfg.scene_rate).floor() as usize;
            let (lock, cv) = &**arrivals;
            let mut last = lock.lock().unwrap_or_else(|e| e.into_inner());
            while last.is_none_or(|l| l < needed) {
                last = cv.wait(last).unwrap_or_else(|e| e.into_inner());
            }
        }
        if let Some(d) = &datum {
            let _ = bus.publish_datum(Topic::Pupil, d);
        }
        if let Some(g) = &gaze {
            let _ = bus.publish_datum(Topic::Gaze, g);
        }
        timer.mark(Stage::Broadcast);
        events.push(EyeEvent {
            exposure: p.exposure,
            published: start.elapsed().as_secs_f64(),
            detected: datum.is_some(),
        });
        samples.push(timer.finish());
        let _ = p.index;
    }
    let wall = first.map_or(0.0, |f| f.elapsed().as_secs_f64());
    Ok((samples, events, wall))
}

fn scene_lane(
    rate: f64,
    start: Instant,
    rx: Receiver<Packet>,
    bus: &Bus,
    arrivals: &Arrivals,
) -> Result<(Vec<StageDurations>, Vec<SceneEvent>), PipelineError> {
    let mut samples = Vec::new();
    let mut events = Vec::new();
    for p in rx {
        let now = Instant::now();
        let arrived = start.elapsed().as_secs_f64();
        {
            let (lock, cv) = &**arrivals;
            *lock.lock().unwrap_or_else(|e| e.into_inner()) = Some(p.index);
            cv.notify_all();
        }
        let mut timer = FrameTimer::start();
        timer.add(Stage::Transfer, now.duration_since(p.sent).as_secs_f64());
        let frame = read_pgm(&p.bytes[..], StreamId::Scene).map_err(|e| PipelineError::Decode(e.to_string()))?;
        timer.mark(Stage::Decompress);
        let markers = detect_markers(&frame);
        timer.mark(Stage::Detect);
        timer.mark(Stage::Map);
        let _ = bus.publish(
            Topic::Surface,
            serde_json::json!({ "timestamp": p.exposure, "markers": markers.len() }),
        );
        timer.mark(Stage::Broadcast);
        events.push(SceneEvent {
            exposure_start: p.exposure,
            exposure_end: p.exposure + 1.0 / rate,
            arrived,
            markers: markers.len(),
        });
        samples.push(timer.finish());
    }
    Ok((samples, events))
}

fn scene_frame(rig: &SceneRig) -> crate::types::GrayFrame {
    let (w, h) = (rig.width as f64, rig.height as f64);
    let s = 0.5 * h;
    let to_scene = Homography::from_matrix([[s, 0.0, 0.5 * (w - s)], [0.0, s, 0.25 * h], [0.0, 0.0, 1.0]])
        .expect("scale is nonzero");
    let content = SceneContent {
        marker: None,
        surfaces: vec![PlacedSurface::with_corner_markers("desk", [1, 2, 3, 4], 0.2, 0.05, to_scene)],
    };
    render_scene_frame(rig, &content, 0.0)
}

/// Runs both lanes and publishes onto `bus`.
pub fn run_live(cfg: &LiveConfig, bus: &Bus) -> Result<LiveReport, PipelineError> {
    let distinct = cfg.distinct_frames.clamp(1, cfg.eye_frames.max(1));
    let eye_frames: Vec<Arc<Vec<u8>>> = (0..distinct)
        .map(|k| encode(&render_eye_frame(&cfg.eye, k as f64 / cfg.eye_rate).frame))
        .collect();
    let scene_count = if cfg.scene_rate > 0.0 {
        (cfg.eye_frames as f64 / cfg.eye_rate * cfg.scene_rate).ceil() as usize
    } else {
        0
    };
    let scene_frames = if scene_count > 0 {
        vec![encode(&scene_frame(&cfg.scene))]
    } else {
        Vec::new()
    };
    let arrivals: Arrivals = Arc::new((Mutex::new(None), Condvar::new()));

    let (eye_tx, eye_rx) = bounded::<Packet>(4);
    let (scene_tx, scene_rx) = bounded::<Packet>(4);
    let start = Instant::now();
    thread::scope(|s| {
        let eye_cam = s.spawn({
            let frames = eye_frames.clone();
            move || camera(start, frames, cfg.eye_frames, cfg.eye_rate, 0.0, cfg.paced, eye_tx)
        });
        let scene_cam = (scene_count > 0).then(|| {
            let frames = scene_frames.clone();
            s.spawn(move || camera(start, frames, scene_count, cfg.scene_rate, cfg.scene_delay, cfg.paced, scene_tx))
        });
        let scene = scene_cam
            .is_some()
            .then(|| s.spawn(|| scene_lane(cfg.scene_rate, start, scene_rx, bus, &arrivals)));
        let eye = eye_lane(cfg, start, eye_rx, bus, &arrivals);
        eye_cam.join().map_err(|_| PipelineError::Panicked)?;
        if let Some(c) = scene_cam {
            c.join().map_err(|_| PipelineError::Panicked)?;
        }
        let (eye_samples, eye_events, eye_wall_time) = eye?;
        let (scene_report, scene_events) = match scene {
            Some(h) => {
                let (samples, events) = h.join().map_err(|_| PipelineError::Panicked)??;
                (Some(LatencyReport::from_samples("scene", &samples)?), events)
            }
            None => (None, Vec::new()),
        };
        Ok(LiveReport {
            eye: LatencyReport::from_samples("eye", &eye_samples)?,
            scene: scene_report,
            eye_events,
            scene_events,
            eye_wall_time,
        })
    })
}

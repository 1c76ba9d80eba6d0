//! Per-stage pipeline latency from sensor exposure to broadcast.

use std::fmt::Write as _;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::timing::clock::TimingError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    /// Exposure end to sensor readout.
    Readout,
    /// Camera to host.
    Transfer,
    Decompress,
    Detect,
    Map,
    /// Serialization and hand-off to subscribers.
    Broadcast,
}

impl Stage {
    pub const ALL: [Stage; 6] = [
        Stage::Readout,
        Stage::Transfer,
        Stage::Decompress,
        Stage::Detect,
        Stage::Map,
        Stage::Broadcast,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Readout => "readout",
            Stage::Transfer => "transfer",
            Stage::Decompress => "decompress",
            Stage::Detect => "detect",
            Stage::Map => "map",
            Stage::Broadcast => "broadcast",
        }
    }
}

/// Stage durations of one frame, seconds, indexed like [`Stage::ALL`].
pub type StageDurations = [f64; 6];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StageStat {
    pub stage: Stage,
    pub mean: f64,
    pub sd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyReport {
    pub pipeline: String,
    pub stages: Vec<StageStat>,
    pub total_mean: f64,
    pub total_sd: f64,
    pub samples: usize,
}

fn mean_sd(v: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = v.clone().count() as f64;
    let mean = v.clone().sum::<f64>() / n;
    let var = if n > 1.0 {
        v.map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

impl LatencyReport {
    /// Aggregates per-frame stage durations (at least two frames).
    pub fn from_samples(pipeline: &str, samples: &[StageDurations]) -> Result<Self, TimingError> {
        if samples.len() < 2 {
            return Err(TimingError::TooFew {
                needed: 2,
                got: samples.len(),
            });
        }
        let stages: Vec<StageStat> = Stage::ALL
            .iter()
            .enumerate()
            .map(|(k, &stage)| {
                let (mean, sd) = mean_sd(samples.iter().map(move |s| s[k]));
                StageStat { stage, mean, sd }
            })
            .collect();
        let (_, total_sd) = mean_sd(samples.iter().map(|s| s.iter().sum::<f64>()));
        Ok(Self {
            pipeline: pipeline.to_owned(),
            total_mean: stages.iter().map(|s| s.mean).sum(),
            stages,
            total_sd,
            samples: samples.len(),
        })
    }

    pub fn stage(&self, stage: Stage) -> Option<&StageStat> {
        self.stages.iter().find(|s| s.stage == stage)
    }

    /// Human-readable table in milliseconds.
    pub fn to_table(&self) -> String {
        let mut s = format!("{} pipeline, {} frames\n", self.pipeline, self.samples);
        let _ = writeln!(s, "{:<12} {:>10} {:>10}", "stage", "mean ms", "sd ms");
        for st in &self.stages {
            let _ = writeln!(
                s,
                "{:<12} {:>10.3} {:>10.3}",
                st.stage.as_str(),
                st.mean * 1e3,
                st.sd * 1e3
            );
        }
        let _ = writeln!(
            s,
            "{:<12} {:>10.3} {:>10.3}",
            "total",
            self.total_mean * 1e3,
            self.total_sd * 1e3
        );
        s
    }
}

/// Wall-clock stage boundaries of one frame.
#[derive(Debug, Clone)]
pub struct FrameTimer {
    last: Instant,
    durations: StageDurations,
}

impl Default for FrameTimer {
    fn default() -> Self {
        Self::start()
    }
}

impl FrameTimer {
    pub fn start() -> Self {
        Self {
            last: Instant::now(),
            durations: [0.0; 6],
        }
    }

    /// Closes `stage` at the current instant.
    pub fn mark(&mut self, stage: Stage) {
        let now = Instant::now();
        self.durations[stage as usize] += (now - self.last).as_secs_f64();
        self.last = now;
    }

    /// Adds a duration measured elsewhere (e.g. a simulated transfer).
    pub fn add(&mut self, stage: Stage, seconds: f64) {
        self.durations[stage as usize] += seconds;
    }

    pub fn finish(self) -> StageDurations {
        self.durations
    }
}

/// Mean and standard deviation of a simulated stage, seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StageModel {
    pub mean: f64,
    pub sd: f64,
}

impl StageModel {
    fn split(means: [f64; 6], total_sd: f64) -> [StageModel; 6] {
        let sd = total_sd / 6f64.sqrt();
        means.map(|mean| StageModel { mean, sd })
    }

    /// Eye lane on modest laptop hardware: 45 ms from exposure to
    /// availability, sd 3 ms, spread over the stages.
    pub fn nominal_eye() -> [StageModel; 6] {
        Self::split([0.017, 0.008, 0.006, 0.010, 0.002, 0.002], 0.003)
    }

    /// Scene lane including the eye measurement: 124 ms to network
    /// broadcast, sd 5 ms.
    pub fn nominal_scene() -> [StageModel; 6] {
        Self::split([0.033, 0.020, 0.015, 0.040, 0.010, 0.006], 0.005)
    }
}

/// Draws `n` frames of independent Gaussian stage durations (clamped at 0).
pub fn simulate_pipeline(
    pipeline: &str,
    stages: &[StageModel; 6],
    n: usize,
    seed: u64,
) -> Result<LatencyReport, TimingError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for s in stages {
        if !(s.sd.is_finite() && s.sd >= 0.0) {
            return Err(TimingError::Jitter(s.sd));
        }
    }
    let dists: Vec<Option<Normal<f64>>> = stages
        .iter()
        .map(|s| (s.sd > 0.0).then(|| Normal::new(s.mean, s.sd).expect("checked sd")))
        .collect();
    let samples: Vec<StageDurations> = (0..n)
        .map(|_| {
            let mut d = [0.0; 6];
            for (k, s) in stages.iter().enumerate() {
                d[k] = match &dists[k] {
                    Some(n) => n.sample(&mut rng).max(0.0),
                    None => s.mean,
                };
            }
            d
        })
        .collect();
    LatencyReport::from_samples(pipeline, &samples)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixed_delays_add_up() {
        let mut stages = [StageModel { mean: 0.0, sd: 0.0 }; 6];
        stages[Stage::Readout as usize].mean = 0.010;
        stages[Stage::Decompress as usize].mean = 0.005;
        stages[Stage::Detect as usize].mean = 0.003;
        let r = simulate_pipeline("eye", &stages, 10, 1).unwrap();
        assert!((r.total_mean - 0.018).abs() < 1e-12);
        assert!(r.total_sd < 1e-12);
        let sum: f64 = r.stages.iter().map(|s| s.mean).sum();
        assert!((sum - r.total_mean).abs() < 1e-9);
    }

    #[test]
    fn nominal_models_add_up() {
        let eye = simulate_pipeline("eye", &StageModel::nominal_eye(), 1400, 3).unwrap();
        assert!((eye.total_mean - 0.045).abs() < 0.001, "{}", eye.total_mean);
        assert!((eye.total_sd - 0.003).abs() < 0.00045, "{}", eye.total_sd);
        let scene = simulate_pipeline("scene", &StageModel::nominal_scene(), 1200, 3).unwrap();
        assert!((scene.total_mean - 0.124).abs() < 0.001, "{}", scene.total_mean);
        assert!((scene.total_sd - 0.005).abs() < 0.00075, "{}", scene.total_sd);
    }

    #[test]
    fn needs_two_frames() {
        assert!(LatencyReport::from_samples("eye", &[[0.0; 6]]).is_err());
    }

    #[test]
    fn timer_accumulates() {
        let mut t = FrameTimer::start();
        t.add(Stage::Transfer, 0.002);
        t.mark(Stage::Detect);
        let d = t.finish();
        assert_eq!(d[Stage::Transfer as usize], 0.002);
        assert!(d[Stage::Detect as usize] >= 0.0);
    }

    #[test]
    fn table_lists_every_stage() {
        let r = LatencyReport::from_samples("world", &[[0.001; 6], [0.002; 6]]).unwrap();
        let t = r.to_table();
        for s in Stage::ALL {
            assert!(t.contains(s.as_str()));
        }
    }
}

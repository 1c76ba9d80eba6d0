//! Timestamp sources and stream jitter.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TimingError {
    #[error("clock jitter must be finite and non-negative, got {0}")]
    Jitter(f64),
    #[error("hardware clocks stamp at exposure start; offset must be 0, got {0}")]
    HardwareOffset(f64),
    #[error("need at least {needed} timestamps, got {got}")]
    TooFew { needed: usize, got: usize },
    #[error("timestamps must be strictly increasing (index {0})")]
    NotMonotonic(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClockKind {
    /// Stamped by the sensor at the start of exposure.
    Hardware,
    /// Stamped by the host on arrival: delayed and jittered.
    Software,
}

/// How a stream's timestamps relate to true exposure times.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClockModel {
    pub kind: ClockKind,
    /// Mean delay after exposure, seconds.
    pub offset: f64,
    /// Standard deviation of the delay, seconds.
    pub jitter_sd: f64,
}

impl ClockModel {
    pub fn hardware() -> Self {
        Self {
            kind: ClockKind::Hardware,
            offset: 0.0,
            jitter_sd: 0.0,
        }
    }

    pub fn software(offset: f64, jitter_sd: f64) -> Result<Self, TimingError> {
        let m = Self {
            kind: ClockKind::Software,
            offset,
            jitter_sd,
        };
        m.validate()?;
        Ok(m)
    }

    /// Host-side stamping of the scene camera: +0.119 s, sd 0.003 s.
    pub fn software_world() -> Self {
        Self {
            kind: ClockKind::Software,
            offset: 0.119,
            jitter_sd: 0.003,
        }
    }

    /// Host-side stamping of the eye camera: +0.038 s, sd 0.002 s.
    pub fn software_eye() -> Self {
        Self {
            kind: ClockKind::Software,
            offset: 0.038,
            jitter_sd: 0.002,
        }
    }

    pub fn validate(&self) -> Result<(), TimingError> {
        if !(self.jitter_sd.is_finite() && self.jitter_sd >= 0.0) {
            return Err(TimingError::Jitter(self.jitter_sd));
        }
        if self.kind == ClockKind::Hardware && self.offset != 0.0 {
            return Err(TimingError::HardwareOffset(self.offset));
        }
        Ok(())
    }

    /// A seeded stamping source for this clock.
    pub fn stamper(self, seed: u64) -> Stamper {
        Stamper {
            clock: self,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

/// Timestamp for an exposure starting at `exposure` under `clock`.
pub fn stamp<R: Rng + ?Sized>(exposure: f64, clock: &ClockModel, rng: &mut R) -> f64 {
    match clock.kind {
        ClockKind::Hardware => exposure,
        ClockKind::Software if clock.jitter_sd == 0.0 => exposure + clock.offset,
        ClockKind::Software => {
            let n = Normal::new(clock.offset, clock.jitter_sd).expect("validated sd");
            exposure + n.sample(rng)
        }
    }
}

/// Stateful, reproducible sequence of stamps.
#[derive(Debug, Clone)]
pub struct Stamper {
    clock: ClockModel,
    rng: ChaCha8Rng,
}

impl Stamper {
    pub fn stamp(&mut self, exposure: f64) -> f64 {
        stamp(exposure, &self.clock, &mut self.rng)
    }
}

/// Standard deviation of successive intervals (sample sd, `n - 1`).
pub fn jitter_stat(timestamps: &[f64]) -> Result<f64, TimingError> {
    if timestamps.len() < 3 {
        return Err(TimingError::TooFew {
            needed: 3,
            got: timestamps.len(),
        });
    }
    if let Some(i) = timestamps.windows(2).position(|w| w[1] <= w[0]) {
        return Err(TimingError::NotMonotonic(i + 1));
    }
    let d: Vec<f64> = timestamps.windows(2).map(|w| w[1] - w[0]).collect();
    let mean = d.iter().sum::<f64>() / d.len() as f64;
    let var = d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (d.len() - 1) as f64;
    Ok(var.sqrt())
}

/// Exposure start times of a free-running camera: nominal period plus
/// Gaussian interval noise, starting at `start`.
pub fn simulate_exposures(start: f64, rate_hz: f64, interval_sd: f64, n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let period = 1.0 / rate_hz;
    let noise = (interval_sd > 0.0).then(|| Normal::new(0.0, interval_sd).expect("finite sd"));
    let mut t = start;
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        if i > 0 {
            let dt = period + noise.as_ref().map_or(0.0, |d| d.sample(&mut rng));
            t += dt.max(period * 1e-3);
        }
        out.push(t);
    }
    out
}

//! Tiered pupil-detection benchmark: frames plus ground-truth ellipses.

use std::fmt;
use std::fs;
use std::io::{self, BufRead, Write};
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::image::save_pgm;
use crate::synth::eye::{render_eye_with, EyeRig, PupilTrajectory, RenderedEye};
use crate::types::{Ellipse, Point2};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tier {
    Clean,
    Noisy,
    OccludedGlint,
}

impl Tier {
    pub const ALL: [Tier; 3] = [Tier::Clean, Tier::Noisy, Tier::OccludedGlint];

    pub fn as_str(self) -> &'static str {
        match self {
            Tier::Clean => "clean",
            Tier::Noisy => "noisy",
            Tier::OccludedGlint => "occluded_glint",
        }
    }
}

impl fmt::Display for Tier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Tier {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Tier::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| format!("unknown tier {s}"))
    }
}

/// Parameters of a generated benchmark. Stored as `rig.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkSpec {
    pub frames: usize,
    pub seed: u64,
    pub width: usize,
    pub height: usize,
    /// Range of the pupil semi-major axis, pixels.
    pub pupil_radius: (f64, f64),
    /// Range of the minor to major axis ratio.
    pub axis_ratio: (f64, f64),
    pub clean_noise_sd: f64,
    pub noisy_noise_sd: f64,
    pub occluded_noise_sd: f64,
    pub occlusion: (f64, f64),
    pub glints: (usize, usize),
    pub glint_radius: (f64, f64),
}

impl Default for BenchmarkSpec {
    fn default() -> Self {
        Self {
            frames: 500,
            seed: 2014,
            width: 640,
            height: 480,
            pupil_radius: (24.0, 50.0),
            axis_ratio: (0.6, 1.0),
            clean_noise_sd: 1.0,
            noisy_noise_sd: 6.0,
            occluded_noise_sd: 3.0,
            occlusion: (0.1, 0.35),
            glints: (1, 3),
            glint_radius: (3.0, 6.0),
        }
    }
}

/// Ground truth for one benchmark frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruthRow {
    pub index: usize,
    pub tier: Tier,
    pub ellipse: Ellipse,
    pub occlusion: f64,
}

impl BenchmarkSpec {
    pub fn tier_of(&self, index: usize) -> Tier {
        Tier::ALL[index % 3]
    }

    /// Rig used to render frame `index`.
    pub fn rig(&self, index: usize) -> (EyeRig, TruthRow) {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(index as u64);
        let tier = self.tier_of(index);
        let a = rng.random_range(self.pupil_radius.0..=self.pupil_radius.1);
        let b = a * rng.random_range(self.axis_ratio.0..=self.axis_ratio.1);
        let theta = rng.random_range(0.0..std::f64::consts::PI);
        let margin_x = 0.25 * self.width as f64;
        let margin_y = 0.27 * self.height as f64;
        let center = Point2::new(
            rng.random_range(margin_x..self.width as f64 - margin_x),
            rng.random_range(margin_y..self.height as f64 - margin_y),
        );
        let ellipse = Ellipse::new(center, a, b, theta);
        let mut rig = EyeRig {
            width: self.width,
            height: self.height,
            trajectory: PupilTrajectory::Fixed(ellipse),
            seed: self.seed,
            ..Default::default()
        };
        let mut occlusion = 0.0;
        match tier {
            Tier::Clean => rig.noise_sd = self.clean_noise_sd,
            Tier::Noisy => rig.noise_sd = self.noisy_noise_sd,
            Tier::OccludedGlint => {
                rig.noise_sd = self.occluded_noise_sd;
                occlusion = rng.random_range(self.occlusion.0..=self.occlusion.1);
                rig.occlusion = occlusion;
                rig.glint_count = rng.random_range(self.glints.0..=self.glints.1);
                rig.glint_radius = rng.random_range(self.glint_radius.0..=self.glint_radius.1);
            }
        }
        let truth = TruthRow {
            index,
            tier,
            ellipse,
            occlusion,
        };
        (rig, truth)
    }

    /// Renders frame `index` in memory.
    pub fn render(&self, index: usize) -> (RenderedEye, TruthRow) {
        let (rig, truth) = self.rig(index);
        let mut r = render_eye_with(&rig, &truth.ellipse, index as f64);
        r.frame.timestamp = index as f64 / 30.0;
        (r, truth)
    }
}

pub const TRUTH_HEADER: &str = "index,tier,center_x,center_y,a,b,theta,occlusion";

pub fn write_truth_csv<W: Write>(mut out: W, rows: &[TruthRow]) -> io::Result<()> {
    writeln!(out, "{TRUTH_HEADER}")?;
    for r in rows {
        let e = r.ellipse;
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.index, r.tier, e.center.x, e.center.y, e.a, e.b, e.theta, r.occlusion
        )?;
    }
    Ok(())
}

pub fn read_truth_csv<R: BufRead>(input: R) -> io::Result<Vec<TruthRow>> {
    let bad = |line: usize, msg: String| io::Error::new(io::ErrorKind::InvalidData, format!("line {line}: {msg}"));
    let mut lines = input.lines();
    let header = lines.next().transpose()?.unwrap_or_default();
    if header.trim_end() != TRUTH_HEADER {
        return Err(bad(1, "missing truth header".into()));
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 8 {
            return Err(bad(i + 2, format!("expected 8 fields, got {}", f.len())));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|e| bad(i + 2, format!("{s}: {e}")));
        rows.push(TruthRow {
            index: f[0].parse().map_err(|e| bad(i + 2, format!("{}: {e}", f[0])))?,
            tier: f[1].parse().map_err(|e: String| bad(i + 2, e))?,
            ellipse: Ellipse::new(Point2::new(num(f[2])?, num(f[3])?), num(f[4])?, num(f[5])?, num(f[6])?),
            occlusion: num(f[7])?,
        });
    }
    Ok(rows)
}

/// Writes `frames/%06d.pgm`, `truth.csv` and `rig.json` under `dir`.
pub fn generate_benchmark(dir: &Path, spec: &BenchmarkSpec) -> io::Result<Vec<TruthRow>> {
    if spec.frames == 0 {
        return Err(io::Error::new(io::ErrorKind::InvalidInput, "benchmark needs at least one frame"));
    }
    let frames = dir.join("frames");
    fs::create_dir_all(&frames)?;
    let mut rows = Vec::with_capacity(spec.frames);
    for i in 0..spec.frames {
        let (r, truth) = spec.render(i);
        save_pgm(&frames.join(format!("{i:06}.pgm")), &r.frame)?;
        rows.push(truth);
    }
    let f = fs::File::create(dir.join("truth.csv"))?;
    let mut w = io::BufWriter::new(f);
    write_truth_csv(&mut w, &rows)?;
    w.flush()?;
    let json = serde_json::to_string_pretty(spec).map_err(io::Error::other)?;
    fs::write(dir.join("rig.json"), json + "\n")?;
    Ok(rows)
}

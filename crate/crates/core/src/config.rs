//! Detector parameters and the JSON configuration document.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::{CameraIntrinsics, Rect};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("invalid parameter `{name}`: {reason}")]
    Invalid { name: &'static str, reason: String },
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse config {path}: {source}")]
    Parse {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

/// Tunable parameters of the pupil detector.
///
/// Defaults are sized for 640x480 eye images.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectorParams {
    /// Smallest and largest inner half-side of the center-surround kernel, pixels.
    pub coarse_radius_range: (f64, f64),
    /// Gaussian sigma of the Canny smoothing stage.
    pub canny_auto_sigma: f64,
    /// Offset added to the lowest histogram spike to define "dark".
    pub histogram_offset: u8,
    /// Intensity at or above which a pixel counts as a specular reflection.
    pub reflection_saturation: u8,
    /// Maximum turn angle (degrees) inside one sub-contour.
    pub curvature_split_angle: f64,
    /// Accepted range of the pupil's semi-major axis, pixels.
    pub pupil_radius_range: (f64, f64),
    /// Minimum confidence for a detection to be reported.
    pub confidence_threshold: f64,
    /// Upper bound on ellipse refits during the support search.
    pub max_support_combinations: usize,
    /// Optional user region of interest; the full frame when absent.
    pub roi: Option<Rect>,
}

impl Default for DetectorParams {
    fn default() -> Self {
        Self {
            coarse_radius_range: (8.0, 40.0),
            canny_auto_sigma: 1.0,
            histogram_offset: 11,
            reflection_saturation: 250,
            curvature_split_angle: 60.0,
            pupil_radius_range: (20.0, 120.0),
            confidence_threshold: 0.25,
            max_support_combinations: 1000,
            roi: None,
        }
    }
}

fn check_range(name: &'static str, (lo, hi): (f64, f64)) -> Result<(), ConfigError> {
    if !(lo.is_finite() && hi.is_finite() && lo > 0.0 && lo < hi) {
        return Err(ConfigError::Invalid {
            name,
            reason: format!("expected 0 < min < max, got ({lo}, {hi})"),
        });
    }
    Ok(())
}

impl DetectorParams {
    pub fn validate(&self) -> Result<(), ConfigError> {
        check_range("coarse_radius_range", self.coarse_radius_range)?;
        check_range("pupil_radius_range", self.pupil_radius_range)?;
        if !(self.confidence_threshold > 0.0 && self.confidence_threshold < 1.0) {
            return Err(ConfigError::Invalid {
                name: "confidence_threshold",
                reason: format!("must lie in (0, 1), got {}", self.confidence_threshold),
            });
        }
        if !(self.canny_auto_sigma.is_finite() && self.canny_auto_sigma > 0.0) {
            return Err(ConfigError::Invalid {
                name: "canny_auto_sigma",
                reason: format!("must be positive, got {}", self.canny_auto_sigma),
            });
        }
        if !(self.curvature_split_angle > 0.0 && self.curvature_split_angle < 180.0) {
            return Err(ConfigError::Invalid {
                name: "curvature_split_angle",
                reason: format!("must lie in (0, 180), got {}", self.curvature_split_angle),
            });
        }
        if self.max_support_combinations == 0 {
            return Err(ConfigError::Invalid {
                name: "max_support_combinations",
                reason: "must be at least 1".into(),
            });
        }
        Ok(())
    }
}

/// Input and output locations used by the command line tools.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IoPaths {
    pub input: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub recording: Option<PathBuf>,
}

/// The complete configuration document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Config {
    pub detector: DetectorParams,
    pub eye_camera: CameraIntrinsics,
    pub scene_camera: CameraIntrinsics,
    /// Total degree of the gaze mapping polynomials.
    pub calibration_degree: usize,
    pub paths: IoPaths,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            detector: DetectorParams::default(),
            eye_camera: CameraIntrinsics::default_eye(),
            scene_camera: CameraIntrinsics::default_scene(),
            calibration_degree: 2,
            paths: IoPaths::default(),
        }
    }
}

impl Config {
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.detector.validate()?;
        if self.calibration_degree == 0 {
            return Err(ConfigError::Invalid {
                name: "calibration_degree",
                reason: "must be at least 1".into(),
            });
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_owned(),
            source,
        })?;
        let cfg: Config = serde_json::from_str(&text).map_err(|source| ConfigError::Parse {
            path: path.to_owned(),
            source,
        })?;
        cfg.validate()?;
        Ok(cfg)
    }
}

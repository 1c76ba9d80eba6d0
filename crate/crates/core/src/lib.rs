//! Head-mounted eye tracking pipeline: pupil detection, gaze calibration,
//! surface mapping, stream timing, recording and streaming, evaluation, and
//! synthetic data generation.

pub mod config;
pub mod detect;
pub mod eval;
pub mod gaze;
pub mod image;
pub mod io;
pub mod pipeline;
pub mod surface;
pub mod synth;
pub mod timing;
pub mod types;

pub use config::{Config, ConfigError, DetectorParams};
pub use types::{
    angular_distance, norm_from_pixel, pixel_from_norm, px_per_degree, CameraIntrinsics, Ellipse,
    FrameError, GazeDatum, GrayFrame, Point2, PupilDatum, Rect, StreamId,
};

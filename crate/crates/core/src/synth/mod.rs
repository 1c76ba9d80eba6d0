//! Synthetic data with exact ground truth: eye images, scene images,
//! benchmark datasets and simulated recording sessions.

pub mod benchmark;
pub mod eye;
pub mod scene;
pub mod session;

pub use benchmark::{generate_benchmark, BenchmarkSpec, Tier, TruthRow};
pub use eye::{render_eye_frame, EyeRig, Palette, PupilTrajectory, RenderedEye};
pub use scene::{
    nine_point_sites, render_scene_frame, ConcentricMarker, FiducialPlacement, PlacedSurface, SceneContent, SceneRig,
};
pub use session::{simulate_session, EyeSceneRig, GazeTruth, Phase, Protocol, SessionStreams, SiteVisit, SubjectModel};

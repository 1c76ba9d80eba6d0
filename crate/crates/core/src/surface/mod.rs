//! Fiducial-tagged reference surfaces and homographic gaze remapping.

pub mod fiducial;
pub mod homography;

pub use fiducial::{
    detect_markers, locate_surface, map_gaze_to_surface, marker_cells, Marker, SurfaceDefinition, SurfaceError,
    SurfaceGaze, SurfaceLocation, MARKER_COUNT,
};
pub use homography::{estimate_homography, Homography, HomographyError};

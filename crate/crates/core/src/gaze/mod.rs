//! Pupil to scene mapping: calibration, on-screen markers and the
//! calibration session.

pub mod calibrate;
pub mod marker;
pub mod session;

pub use calibrate::{
    calibrate, map_gaze, monomial_count, monomial_exponents, monomials, read_pairs_csv, write_pairs_csv,
    CalibrationError, CalibrationModel, CalibrationPair, PAIRS_HEADER,
};
pub use marker::{detect_concentric_marker, MarkerDetection, MarkerKind};
pub use session::{screen_marker_session, settled_markers, MarkerObservation, SessionError, SessionGating, SettledMarker};

//! Accuracy and precision metrics, outlier filtering, and the detection
//! benchmark.

pub mod hausdorff;
pub mod metrics;
pub mod session;

pub use hausdorff::{detection_rate_curve, detection_rate_from_ellipses, ellipse_hausdorff, DetectionRateCurve};
pub use metrics::{
    accuracy, filter_outliers, precision, AccuracyReport, AngularPair, MetricError, SiteReport, DEFAULT_OUTLIER_LIMIT,
};
pub use session::{calibrate_session, evaluate_session, run_accuracy_session, score_test, EvalError, EvalSettings};

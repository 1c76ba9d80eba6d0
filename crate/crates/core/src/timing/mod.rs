//! Timestamp provenance, stream pairing and latency instrumentation.

pub mod clock;
pub mod latency;
pub mod pairing;

pub use clock::{jitter_stat, simulate_exposures, stamp, ClockKind, ClockModel, Stamper, TimingError};
pub use latency::{simulate_pipeline, FrameTimer, LatencyReport, Stage, StageModel};
pub use pairing::{nearest_index, pair_by_time, DEFAULT_MAX_GAP};

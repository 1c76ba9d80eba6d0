use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "gazelab", version, about = "Batch tools for a head-mounted eye tracking pipeline")]
pub struct Cli {
    /// JSON configuration document (detector parameters, cameras, degree).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Print reports as JSON instead of tables.
    #[arg(long, global = true)]
    pub json: bool,
    /// Log progress to standard error; repeat for more detail.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset, session or surface recording.
    Synth(SynthArgs),
    /// Detect pupils in a directory of eye frames and write a pupil CSV.
    Detect(DetectArgs),
    /// Fit a gaze mapping from calibration pairs or a session.
    Calibrate(CalibrateArgs),
    /// Map a pupil CSV through a calibration model into a gaze CSV.
    Map(MapArgs),
    /// Locate a marker-defined surface in scene frames and map gaze onto it.
    Surface(SurfaceArgs),
    /// Calibrate and score a synthetic accuracy session.
    Evaluate(EvaluateArgs),
    /// Score pupil detection against benchmark ground truth.
    Benchmark(BenchmarkArgs),
    /// Measure or simulate per-stage pipeline latency.
    Latency(LatencyArgs),
    /// Write a gaze recording from a session.
    Record(RecordArgs),
    /// Replay a recording over the message bus at its frame pacing.
    Stream(StreamArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SynthKind {
    /// Tiered eye-image benchmark with ground-truth ellipses.
    Benchmark,
    /// Screen-marker calibration and accuracy-test session.
    Session,
    /// Scene frames showing a fiducial-marked surface.
    Surface,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, value_enum, default_value = "benchmark")]
    pub kind: SynthKind,
    /// Frames to render (benchmark and surface kinds).
    #[arg(long)]
    pub frames: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Pupil-centre noise of the simulated subject, eye pixels (session kind).
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct WorkerArgs {
    /// Worker threads; defaults to the number of logical cores.
    #[arg(long)]
    pub workers: Option<usize>,
}

#[derive(Debug, Args)]
pub struct DetectArgs {
    /// Dataset directory holding `frames/*.pgm`, or the frames themselves.
    pub dataset: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub workers: WorkerArgs,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    /// CSV of calibration pairs.
    #[arg(long, conflicts_with = "session", required_unless_present = "session")]
    pub pairs: Option<PathBuf>,
    /// Session directory written by `synth --kind session`.
    #[arg(long)]
    pub session: Option<PathBuf>,
    /// Polynomial degree; overrides the configuration.
    #[arg(long)]
    pub degree: Option<usize>,
    /// Model JSON destination.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct MapArgs {
    /// Pupil CSV written by `detect`.
    pub pupil: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SurfaceArgs {
    /// Directory of scene frames (`frames/*.pgm`, optional `scene_timestamps.csv`).
    pub scene: PathBuf,
    /// Surface definition JSON.
    #[arg(long)]
    pub definition: PathBuf,
    /// Per-frame surface poses CSV destination.
    #[arg(long)]
    pub out: PathBuf,
    /// Gaze CSV to map onto the surface.
    #[arg(long, requires = "gaze_out")]
    pub gaze: Option<PathBuf>,
    /// Surface gaze CSV destination.
    #[arg(long, requires = "gaze")]
    pub gaze_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub session: PathBuf,
}

#[derive(Debug, Args)]
pub struct BenchmarkArgs {
    /// Benchmark directory written by `synth --kind benchmark`.
    pub dataset: PathBuf,
    /// Detection-rate curve CSV destination.
    #[arg(long)]
    pub curve: Option<PathBuf>,
    #[command(flatten)]
    pub workers: WorkerArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LatencyMode {
    /// Draw stage durations from nominal per-stage models.
    Simulated,
    /// Time the real detector on a paced synthetic stream.
    Live,
}

#[derive(Debug, Args)]
pub struct LatencyArgs {
    #[arg(long, value_enum, default_value = "simulated")]
    pub mode: LatencyMode,
    #[arg(long, default_value_t = 1400)]
    pub frames: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Send frames back to back instead of at the camera rate (live mode).
    #[arg(long)]
    pub unpaced: bool,
}

#[derive(Debug, Args)]
pub struct RecordArgs {
    #[arg(long)]
    pub session: PathBuf,
    /// Recording directory destination.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct StreamArgs {
    /// Recording directory holding `gaze.csv`.
    pub recording: PathBuf,
    #[arg(long, default_value = "127.0.0.1:50020")]
    pub bind: String,
    /// Playback speed factor; 0 replays without pacing.
    #[arg(long, default_value_t = 1.0)]
    pub speed: f64,
    /// Wait for this many subscribers before replaying.
    #[arg(long, default_value_t = 0)]
    pub wait_for: usize,
}

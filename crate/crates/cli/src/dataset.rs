//! Directory layouts shared by the commands.

use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::Context as _;
use gazelab::io::recording::{format_timestamp, read_timestamps, timestamp_file, TIMESTAMP_HEADER};
use gazelab::StreamId;
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::failure::{data, Classify, Failure};

pub const FRAMES_DIR: &str = "frames";
pub const RIG_FILE: &str = "rig.json";
pub const SESSION_FILE: &str = "session.json";
pub const PUPIL_FILE: &str = "pupil.csv";
pub const SURFACE_FILE: &str = "surface.json";
pub const TRUTH_FILE: &str = "truth.csv";
pub const POSES_FILE: &str = "poses.json";

/// Nominal frame rate used when a dataset carries no timestamps.
pub const DEFAULT_RATE: f64 = 30.0;

pub fn require_dir(path: &Path) -> Result<(), Failure> {
    if !path.is_dir() {
        return Err(data(format!("{} is not a directory", path.display())));
    }
    Ok(())
}

pub fn require_file(path: &Path) -> Result<(), Failure> {
    if !path.is_file() {
        return Err(data(format!("{} does not exist", path.display())));
    }
    Ok(())
}

/// Checks that the parent of an output path exists or can be created.
pub fn prepare_output(path: &Path) -> Result<(), Failure> {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => fs::create_dir_all(p)
            .with_context(|| format!("cannot create {}", p.display()))
            .data(),
        _ => Ok(()),
    }
}

/// Frames of a dataset: `dir/frames/*.pgm` if present, else `dir/*.pgm`,
/// in file-name order.
pub fn frame_paths(dir: &Path) -> Result<Vec<PathBuf>, Failure> {
    require_dir(dir)?;
    let nested = dir.join(FRAMES_DIR);
    let root = if nested.is_dir() { nested } else { dir.to_owned() };
    let mut paths: Vec<PathBuf> = fs::read_dir(&root)
        .with_context(|| format!("cannot list {}", root.display()))
        .data()?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "pgm"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(data(format!("no .pgm frames in {}", root.display())));
    }
    Ok(paths)
}

/// Frame timestamps from `<stream>_timestamps.csv`, or `k / 30` when absent.
pub fn frame_timestamps(dir: &Path, stream: StreamId, count: usize) -> Result<Vec<f64>, Failure> {
    let ts = read_timestamps(dir, stream).data()?;
    if ts.is_empty() {
        return Ok((0..count).map(|k| k as f64 / DEFAULT_RATE).collect());
    }
    if ts.len() != count {
        return Err(data(format!(
            "{} lists {} timestamps for {count} frames",
            dir.join(timestamp_file(stream)).display(),
            ts.len()
        )));
    }
    Ok(ts)
}

pub fn write_timestamps(dir: &Path, stream: StreamId, ts: &[f64]) -> Result<(), Failure> {
    let path = dir.join(timestamp_file(stream));
    let f = fs::File::create(&path)
        .with_context(|| format!("cannot create {}", path.display()))
        .data()?;
    let mut w = BufWriter::new(f);
    let mut body = format!("{TIMESTAMP_HEADER}\n");
    for t in ts {
        body.push_str(&format_timestamp(*t));
        body.push('\n');
    }
    w.write_all(body.as_bytes())
        .and_then(|_| w.flush())
        .with_context(|| format!("cannot write {}", path.display()))
        .data()
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, Failure> {
    require_file(path)?;
    let f = fs::File::open(path)
        .with_context(|| format!("cannot open {}", path.display()))
        .data()?;
    serde_json::from_reader(BufReader::new(f))
        .with_context(|| format!("cannot parse {}", path.display()))
        .data()
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value).internal()?;
    fs::write(path, text + "\n")
        .with_context(|| format!("cannot write {}", path.display()))
        .data()
}

pub fn create(path: &Path) -> Result<BufWriter<fs::File>, Failure> {
    fs::File::create(path)
        .map(BufWriter::new)
        .with_context(|| format!("cannot create {}", path.display()))
        .data()
}

pub fn open(path: &Path) -> Result<BufReader<fs::File>, Failure> {
    require_file(path)?;
    fs::File::open(path)
        .map(BufReader::new)
        .with_context(|| format!("cannot open {}", path.display()))
        .data()
}

//! On-disk recordings: gaze CSV, per-stream timestamp files and pupil CSV.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::{Ellipse, GazeDatum, Point2, PupilDatum, StreamId};

pub const GAZE_FILE: &str = "gaze.csv";
pub const GAZE_HEADER: &str = "gaze x,gaze y,pupil x,pupil y,timestamp,confidence";
pub const TIMESTAMP_HEADER: &str = "timestamp";
pub const PUPIL_HEADER: &str = "timestamp,confidence,norm_x,norm_y,center_x,center_y,a,b,theta";

#[derive(Debug, Error)]
pub enum RecordingError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}: unexpected header {found:?}")]
    Header { path: PathBuf, found: String },
    #[error("{path}: line {line}: {msg}")]
    Line { path: PathBuf, line: usize, msg: String },
    #[error("row rejected: {0}")]
    Rejected(String),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> RecordingError + '_ {
    move |source| RecordingError::Io {
        path: path.to_owned(),
        source,
    }
}

/// One gaze sample as stored on disk.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecordRow {
    pub gaze_x: f64,
    pub gaze_y: f64,
    pub pupil_x: f64,
    pub pupil_y: f64,
    pub timestamp: f64,
    pub confidence: f64,
}

impl RecordRow {
    pub fn from_gaze(g: &GazeDatum) -> Self {
        Self {
            gaze_x: g.norm_pos.x,
            gaze_y: g.norm_pos.y,
            pupil_x: g.base.norm_pos.x,
            pupil_y: g.base.norm_pos.y,
            timestamp: g.timestamp,
            confidence: g.confidence(),
        }
    }

    fn fields(&self) -> [(&'static str, f64); 6] {
        [
            ("gaze x", self.gaze_x),
            ("gaze y", self.gaze_y),
            ("pupil x", self.pupil_x),
            ("pupil y", self.pupil_y),
            ("timestamp", self.timestamp),
            ("confidence", self.confidence),
        ]
    }

    pub fn validate(&self) -> Result<(), RecordingError> {
        for (name, v) in self.fields() {
            if !v.is_finite() {
                return Err(RecordingError::Rejected(format!("{name} is {v}")));
            }
        }
        if !(0.0..=1.0).contains(&self.confidence) {
            return Err(RecordingError::Rejected(format!(
                "confidence {} outside [0, 1]",
                self.confidence
            )));
        }
        Ok(())
    }
}

/// `%g`-style formatting with 6 significant digits and trailing zeros
/// removed.
pub fn format_sig6(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    let sci = format!("{v:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    let trim = |s: &str| -> String {
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_owned()
        } else {
            s.to_owned()
        }
    };
    if (-4..6).contains(&exp) {
        trim(&format!("{v:.*}", (5 - exp) as usize))
    } else {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{sign}{:02}", trim(mantissa), exp.abs())
    }
}

/// Seconds with microsecond resolution.
pub fn format_timestamp(t: f64) -> String {
    format!("{t:.6}")
}

/// One `gaze.csv` line without the newline.
pub fn format_row(r: &RecordRow) -> String {
    format!(
        "{},{},{},{},{},{}",
        format_sig6(r.gaze_x),
        format_sig6(r.gaze_y),
        format_sig6(r.pupil_x),
        format_sig6(r.pupil_y),
        format_timestamp(r.timestamp),
        format_sig6(r.confidence)
    )
}

fn parse_fields<const N: usize>(line: &str) -> Result<[f64; N], String> {
    let parts: Vec<&str> = line.split(',').collect();
    if parts.len() != N {
        return Err(format!("expected {N} fields, got {}", parts.len()));
    }
    let mut out = [0.0f64; N];
    for (o, p) in out.iter_mut().zip(parts) {
        *o = p.parse().map_err(|e| format!("{p:?}: {e}"))?;
        if !o.is_finite() {
            return Err(format!("non-finite value {p:?}"));
        }
    }
    Ok(out)
}

/// Reads CSV data lines after checking the header; `parse` sees each line.
fn read_csv<R: BufRead, T>(
    input: R,
    path: &Path,
    header: &str,
    mut parse: impl FnMut(&str) -> Result<T, String>,
) -> Result<Vec<T>, RecordingError> {
    let mut lines = input.lines();
    let first = lines.next().transpose().map_err(io_err(path))?.unwrap_or_default();
    if first != header {
        return Err(RecordingError::Header {
            path: path.to_owned(),
            found: first,
        });
    }
    let mut out = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.is_empty() {
            continue;
        }
        out.push(parse(&line).map_err(|msg| RecordingError::Line {
            path: path.to_owned(),
            line: i + 2,
            msg,
        })?);
    }
    Ok(out)
}

pub fn write_gaze_csv<W: Write>(mut out: W, rows: &[RecordRow]) -> Result<(), RecordingError> {
    let path = Path::new("<stream>");
    writeln!(out, "{GAZE_HEADER}").map_err(io_err(path))?;
    for r in rows {
        r.validate()?;
        writeln!(out, "{}", format_row(r)).map_err(io_err(path))?;
    }
    Ok(())
}

pub fn read_gaze_csv<R: BufRead>(input: R, path: &Path) -> Result<Vec<RecordRow>, RecordingError> {
    read_csv(input, path, GAZE_HEADER, |line| {
        let [gx, gy, px, py, t, c] = parse_fields::<6>(line)?;
        let row = RecordRow {
            gaze_x: gx,
            gaze_y: gy,
            pupil_x: px,
            pupil_y: py,
            timestamp: t,
            confidence: c,
        };
        row.validate().map_err(|e| e.to_string())?;
        Ok(row)
    })
}

pub fn timestamp_file(stream: StreamId) -> String {
    format!("{}_timestamps.csv", stream.as_str())
}

/// Streaming writer for a recording directory. Files are flushed by
/// [`RecordingWriter::finish`].
pub struct RecordingWriter {
    dir: PathBuf,
    gaze: BufWriter<File>,
    stamps: BTreeMap<StreamId, BufWriter<File>>,
    rows: usize,
}

impl RecordingWriter {
    pub fn create(dir: &Path) -> Result<Self, RecordingError> {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        let path = dir.join(GAZE_FILE);
        let mut gaze = BufWriter::new(File::create(&path).map_err(io_err(&path))?);
        writeln!(gaze, "{GAZE_HEADER}").map_err(io_err(&path))?;
        Ok(Self {
            dir: dir.to_owned(),
            gaze,
            stamps: BTreeMap::new(),
            rows: 0,
        })
    }

    /// Appends a row; rows with non-finite fields are rejected and nothing
    /// is written.
    pub fn write_row(&mut self, row: &RecordRow) -> Result<(), RecordingError> {
        row.validate()?;
        let path = self.dir.join(GAZE_FILE);
        writeln!(self.gaze, "{}", format_row(row)).map_err(io_err(&path))?;
        self.rows += 1;
        Ok(())
    }

    pub fn write_timestamp(&mut self, stream: StreamId, t: f64) -> Result<(), RecordingError> {
        if !t.is_finite() {
            return Err(RecordingError::Rejected(format!("{} timestamp is {t}", stream.as_str())));
        }
        let path = self.dir.join(timestamp_file(stream));
        let w = match self.stamps.entry(stream) {
            std::collections::btree_map::Entry::Occupied(e) => e.into_mut(),
            std::collections::btree_map::Entry::Vacant(e) => {
                let mut w = BufWriter::new(File::create(&path).map_err(io_err(&path))?);
                writeln!(w, "{TIMESTAMP_HEADER}").map_err(io_err(&path))?;
                e.insert(w)
            }
        };
        writeln!(w, "{}", format_timestamp(t)).map_err(io_err(&path))
    }

    /// Flushes all files and returns the number of gaze rows written.
    pub fn finish(mut self) -> Result<usize, RecordingError> {
        let path = self.dir.join(GAZE_FILE);
        self.gaze.flush().map_err(io_err(&path))?;
        for (stream, w) in &mut self.stamps {
            let path = self.dir.join(timestamp_file(*stream));
            w.flush().map_err(io_err(&path))?;
        }
        Ok(self.rows)
    }
}

/// Writes `gaze.csv` and one timestamp file per stream present in `stamps`.
pub fn write_recording(
    dir: &Path,
    rows: impl IntoIterator<Item = RecordRow>,
    stamps: &[(StreamId, Vec<f64>)],
) -> Result<usize, RecordingError> {
    let mut w = RecordingWriter::create(dir)?;
    for r in rows {
        w.write_row(&r)?;
    }
    for (stream, ts) in stamps {
        for t in ts {
            w.write_timestamp(*stream, *t)?;
        }
    }
    w.finish()
}

pub fn read_recording(dir: &Path) -> Result<Vec<RecordRow>, RecordingError> {
    let path = dir.join(GAZE_FILE);
    let f = File::open(&path).map_err(io_err(&path))?;
    read_gaze_csv(BufReader::new(f), &path)
}

/// Timestamps of one stream; empty when the stream was not recorded.
pub fn read_timestamps(dir: &Path, stream: StreamId) -> Result<Vec<f64>, RecordingError> {
    let path = dir.join(timestamp_file(stream));
    if !path.exists() {
        return Ok(Vec::new());
    }
    let f = File::open(&path).map_err(io_err(&path))?;
    read_csv(BufReader::new(f), &path, TIMESTAMP_HEADER, |line| {
        Ok(parse_fields::<1>(line)?[0])
    })
}

/// Full-precision pupil CSV written by detection.
pub fn write_pupil_csv<W: Write>(mut out: W, data: &[PupilDatum]) -> io::Result<()> {
    writeln!(out, "{PUPIL_HEADER}")?;
    for d in data {
        let e = d.ellipse;
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            d.timestamp, d.confidence, d.norm_pos.x, d.norm_pos.y, e.center.x, e.center.y, e.a, e.b, e.theta
        )?;
    }
    Ok(())
}

pub fn read_pupil_csv<R: BufRead>(input: R, path: &Path) -> Result<Vec<PupilDatum>, RecordingError> {
    read_csv(input, path, PUPIL_HEADER, |line| {
        let [t, c, nx, ny, cx, cy, a, b, theta] = parse_fields::<9>(line)?;
        if !(0.0..=1.0).contains(&c) {
            return Err(format!("confidence {c} outside [0, 1]"));
        }
        Ok(PupilDatum {
            ellipse: Ellipse::new(Point2::new(cx, cy), a, b, theta),
            norm_pos: Point2::new(nx, ny),
            confidence: c,
            timestamp: t,
        })
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sig6_matches_printf_g() {
        assert_eq!(format_sig6(0.97686), "0.97686");
        assert_eq!(format_sig6(0.585903), "0.585903");
        assert_eq!(format_sig6(1.0), "1");
        assert_eq!(format_sig6(-0.5), "-0.5");
        assert_eq!(format_sig6(123456.7), "123457");
        assert_eq!(format_sig6(1234567.0), "1.23457e+06");
        assert_eq!(format_sig6(0.0001), "0.0001");
        assert_eq!(format_sig6(0.00001234), "1.234e-05");
        assert_eq!(format_sig6(9.9999999), "10");
    }

    #[test]
    fn table_row_bytes() {
        let r = RecordRow {
            gaze_x: 0.585903,
            gaze_y: 0.344576,
            pupil_x: 0.538961,
            pupil_y: 0.473854,
            timestamp: 0.139290,
            confidence: 0.97686,
        };
        assert_eq!(
            format_row(&r),
            "0.585903,0.344576,0.538961,0.473854,0.139290,0.97686"
        );
    }

    #[test]
    fn nan_row_rejected() {
        let r = RecordRow {
            gaze_x: f64::NAN,
            gaze_y: 0.0,
            pupil_x: 0.0,
            pupil_y: 0.0,
            timestamp: 0.0,
            confidence: 1.0,
        };
        assert!(matches!(write_gaze_csv(Vec::new(), &[r]), Err(RecordingError::Rejected(_))));
    }

    #[test]
    fn reordered_header_rejected() {
        let text = "gaze y,gaze x,pupil x,pupil y,timestamp,confidence\n";
        assert!(matches!(
            read_gaze_csv(text.as_bytes(), Path::new("x")),
            Err(RecordingError::Header { .. })
        ));
    }

    #[test]
    fn corrupt_line_is_named() {
        let text = format!("{GAZE_HEADER}\n0.1,0.2,0.3,0.4,0.5,0.6\n0.1,oops,0.3,0.4,0.5,0.6\n");
        match read_gaze_csv(text.as_bytes(), Path::new("x")) {
            Err(RecordingError::Line { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }
}

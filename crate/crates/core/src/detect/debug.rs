//! Per-frame dump of detector stages as PGM images plus a JSON record.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use crate::detect::{DetectionTrace, EdgeMap};
use crate::image::save_pgm;
use crate::types::{Ellipse, GrayFrame, StreamId};

fn edge_image(edges: &EdgeMap) -> GrayFrame {
    let px = edges
        .as_slice()
        .iter()
        .map(|&e| if e { 255 } else { 0 })
        .collect();
    GrayFrame::new(edges.width(), edges.height(), px, 0.0, StreamId::Eye)
        .expect("edge map dims are positive")
}

fn draw_ellipse(frame: &mut GrayFrame, e: &Ellipse, value: u8) {
    let n = (8.0 * e.a).ceil().max(64.0) as usize;
    for p in e.sample(n) {
        if p.x >= 0.0 && p.y >= 0.0 {
            let (x, y) = (p.x.round() as usize, p.y.round() as usize);
            if x < frame.width() && y < frame.height() {
                frame.set(x, y, value);
            }
        }
    }
}

/// Writes `NNNNNN_window.pgm`, `_edges.pgm`, `_filtered.pgm`, `_overlay.pgm`
/// and `NNNNNN.json` into `dir`. Returns the JSON path.
pub fn write_debug_dump(
    dir: &Path,
    index: usize,
    frame: &GrayFrame,
    trace: &DetectionTrace,
) -> io::Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let stem = format!("{index:06}");
    let w = trace.window;
    if !w.is_empty() {
        save_pgm(&dir.join(format!("{stem}_window.pgm")), &frame.crop(w))?;
    }
    if let Some(e) = &trace.edges {
        save_pgm(&dir.join(format!("{stem}_edges.pgm")), &edge_image(e))?;
    }
    if let Some(e) = &trace.filtered {
        save_pgm(&dir.join(format!("{stem}_filtered.pgm")), &edge_image(e))?;
    }
    let mut overlay = frame.clone();
    for s in &trace.seeds {
        draw_ellipse(&mut overlay, &s.ellipse, 128);
    }
    if let Some(b) = &trace.best {
        draw_ellipse(&mut overlay, &b.ellipse, 255);
    }
    save_pgm(&dir.join(format!("{stem}_overlay.pgm")), &overlay)?;
    let json_path = dir.join(format!("{stem}.json"));
    let body = serde_json::to_string_pretty(trace).map_err(io::Error::other)?;
    fs::write(&json_path, body)?;
    Ok(json_path)
}

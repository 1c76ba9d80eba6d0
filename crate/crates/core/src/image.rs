//! Low-level raster helpers shared by the detectors and the renderer.

use std::io::{BufRead, Write};

use crate::types::{FrameError, GrayFrame, StreamId};

/// Summed-area table with a zero row and column prepended.
#[derive(Debug, Clone)]
pub struct IntegralImage {
    width: usize,
    height: usize,
    sums: Vec<u64>,
}

impl IntegralImage {
    pub fn new(frame: &GrayFrame) -> Self {
        let (w, h) = (frame.width(), frame.height());
        let stride = w + 1;
        let mut sums = vec![0u64; stride * (h + 1)];
        for y in 0..h {
            let mut row = 0u64;
            for x in 0..w {
                row += frame.get(x, y) as u64;
                sums[(y + 1) * stride + x + 1] = sums[y * stride + x + 1] + row;
            }
        }
        Self {
            width: w,
            height: h,
            sums,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Sum over the half-open box `[x0, x1) x [y0, y1)`.
    #[inline]
    pub fn box_sum(&self, x0: usize, y0: usize, x1: usize, y1: usize) -> u64 {
        let s = self.width + 1;
        self.sums[y1 * s + x1] + self.sums[y0 * s + x0]
            - self.sums[y0 * s + x1]
            - self.sums[y1 * s + x0]
    }
}

/// Normalized 1D Gaussian kernel truncated at `3 sigma`.
pub fn gaussian_kernel(sigma: f64) -> Vec<f32> {
    let radius = (3.0 * sigma).ceil().max(1.0) as usize;
    let mut k: Vec<f64> = (0..=2 * radius)
        .map(|i| {
            let d = i as f64 - radius as f64;
            (-d * d / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    k.into_iter().map(|v| v as f32).collect()
}

/// Separable Gaussian blur with clamped borders; returns floating-point pixels.
pub fn gaussian_blur(frame: &GrayFrame, sigma: f64) -> Vec<f32> {
    let (w, h) = (frame.width(), frame.height());
    let k = gaussian_kernel(sigma);
    let r = (k.len() / 2) as isize;
    let src: Vec<f32> = frame.pixels().iter().map(|&p| p as f32).collect();
    let mut tmp = vec![0f32; w * h];
    for y in 0..h {
        let row = &src[y * w..(y + 1) * w];
        for x in 0..w {
            let mut acc = 0f32;
            for (i, kv) in k.iter().enumerate() {
                let xx = (x as isize + i as isize - r).clamp(0, w as isize - 1) as usize;
                acc += kv * row[xx];
            }
            tmp[y * w + x] = acc;
        }
    }
    let mut out = vec![0f32; w * h];
    for y in 0..h {
        for (i, kv) in k.iter().enumerate() {
            let yy = (y as isize + i as isize - r).clamp(0, h as isize - 1) as usize;
            let src_row = &tmp[yy * w..(yy + 1) * w];
            let dst = &mut out[y * w..(y + 1) * w];
            for x in 0..w {
                dst[x] += kv * src_row[x];
            }
        }
    }
    out
}

/// Square min and max filters of half-width `r` (window `2r+1`), clamped at borders.
pub fn min_max_filter(frame: &GrayFrame, r: usize) -> (Vec<u8>, Vec<u8>) {
    let (w, h) = (frame.width(), frame.height());
    let px = frame.pixels();
    let mut hmin = vec![0u8; w * h];
    let mut hmax = vec![0u8; w * h];
    for y in 0..h {
        for x in 0..w {
            let x0 = x.saturating_sub(r);
            let x1 = (x + r).min(w - 1);
            let row = &px[y * w + x0..=y * w + x1];
            hmin[y * w + x] = *row.iter().min().unwrap();
            hmax[y * w + x] = *row.iter().max().unwrap();
        }
    }
    let mut vmin = vec![0u8; w * h];
    let mut vmax = vec![0u8; w * h];
    for y in 0..h {
        let y0 = y.saturating_sub(r);
        let y1 = (y + r).min(h - 1);
        for x in 0..w {
            let mut lo = u8::MAX;
            let mut hi = u8::MIN;
            for yy in y0..=y1 {
                lo = lo.min(hmin[yy * w + x]);
                hi = hi.max(hmax[yy * w + x]);
            }
            vmin[y * w + x] = lo;
            vmax[y * w + x] = hi;
        }
    }
    (vmin, vmax)
}

/// Bilinear sample of `frame` at a continuous position, clamped to the border.
pub fn bilinear(frame: &GrayFrame, x: f64, y: f64) -> f64 {
    let (w, h) = (frame.width(), frame.height());
    let x = x.clamp(0.0, (w - 1) as f64);
    let y = y.clamp(0.0, (h - 1) as f64);
    let x0 = x.floor() as usize;
    let y0 = y.floor() as usize;
    let x1 = (x0 + 1).min(w - 1);
    let y1 = (y0 + 1).min(h - 1);
    let fx = x - x0 as f64;
    let fy = y - y0 as f64;
    let p = |xx, yy| frame.get(xx, yy) as f64;
    let top = p(x0, y0) * (1.0 - fx) + p(x1, y0) * fx;
    let bottom = p(x0, y1) * (1.0 - fx) + p(x1, y1) * fx;
    top * (1.0 - fy) + bottom * fy
}

/// Median intensity of a frame.
pub fn median_intensity(frame: &GrayFrame) -> u8 {
    let mut hist = [0usize; 256];
    for &p in frame.pixels() {
        hist[p as usize] += 1;
    }
    let half = frame.pixels().len().div_ceil(2);
    let mut acc = 0;
    for (v, &c) in hist.iter().enumerate() {
        acc += c;
        if acc >= half {
            return v as u8;
        }
    }
    255
}

/// Pixels ignored at each end of the histogram by [`intensity_span`].
pub const SPAN_TAIL: usize = 50;

/// Darkest and brightest levels after discarding the `SPAN_TAIL` extreme
/// pixels at each end (1% on small frames). A fixed count rather than a
/// fraction keeps small targets in large frames visible.
pub fn intensity_span(frame: &GrayFrame) -> (u8, u8) {
    let mut hist = [0usize; 256];
    for &p in frame.pixels() {
        hist[p as usize] += 1;
    }
    let tail = (frame.pixels().len() / 100).clamp(1, SPAN_TAIL);
    let level = |order: Vec<usize>| {
        let mut acc = 0;
        order
            .into_iter()
            .find(|&v| {
                acc += hist[v];
                acc >= tail
            })
            .unwrap_or(0) as u8
    };
    (level((0..256).collect()), level((0..256).rev().collect()))
}

#[derive(Debug, thiserror::Error)]
pub enum PgmError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("not a binary 8-bit PGM: {0}")]
    Format(String),
    #[error(transparent)]
    Frame(#[from] FrameError),
}

/// Writes a binary (P5) 8-bit PGM.
pub fn write_pgm<W: Write>(mut out: W, frame: &GrayFrame) -> std::io::Result<()> {
    write!(out, "P5\n{} {}\n255\n", frame.width(), frame.height())?;
    out.write_all(frame.pixels())?;
    out.flush()
}

/// Reads a binary (P5) 8-bit PGM. Comment lines in the header are skipped.
pub fn read_pgm<R: BufRead>(mut input: R, stream: StreamId) -> Result<GrayFrame, PgmError> {
    let mut fields = Vec::with_capacity(4);
    let mut line = String::new();
    while fields.len() < 4 {
        line.clear();
        if input.read_line(&mut line)? == 0 {
            return Err(PgmError::Format("truncated header".into()));
        }
        let content = line.split('#').next().unwrap_or("");
        fields.extend(content.split_whitespace().map(str::to_owned));
    }
    if fields[0] != "P5" {
        return Err(PgmError::Format(format!("magic {}", fields[0])));
    }
    let parse = |s: &str| {
        s.parse::<usize>()
            .map_err(|_| PgmError::Format(format!("bad header field {s}")))
    };
    let (w, h, max) = (parse(&fields[1])?, parse(&fields[2])?, parse(&fields[3])?);
    if max != 255 {
        return Err(PgmError::Format(format!("maxval {max}")));
    }
    let mut pixels = vec![0u8; w * h];
    input.read_exact(&mut pixels)?;
    Ok(GrayFrame::new(w, h, pixels, 0.0, stream)?)
}

pub fn save_pgm(path: &std::path::Path, frame: &GrayFrame) -> std::io::Result<()> {
    let f = std::fs::File::create(path)?;
    write_pgm(std::io::BufWriter::new(f), frame)
}

pub fn load_pgm(path: &std::path::Path, stream: StreamId) -> Result<GrayFrame, PgmError> {
    let f = std::fs::File::open(path)?;
    read_pgm(std::io::BufReader::new(f), stream)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(w: usize, h: usize) -> GrayFrame {
        let px = (0..w * h).map(|i| (i * 7 % 251) as u8).collect();
        GrayFrame::new(w, h, px, 0.0, StreamId::Eye).unwrap()
    }

    #[test]
    fn integral_matches_direct_sum() {
        let f = ramp(13, 9);
        let ii = IntegralImage::new(&f);
        for (x0, y0, x1, y1) in [(0, 0, 13, 9), (2, 3, 7, 8), (5, 5, 6, 6), (4, 4, 4, 7)] {
            let mut s = 0u64;
            for y in y0..y1 {
                for x in x0..x1 {
                    s += f.get(x, y) as u64;
                }
            }
            assert_eq!(ii.box_sum(x0, y0, x1, y1), s);
        }
    }

    #[test]
    fn blur_preserves_constant() {
        let f = GrayFrame::filled(10, 6, 77).unwrap();
        for v in gaussian_blur(&f, 1.4) {
            assert!((v - 77.0).abs() < 1e-3);
        }
    }

    #[test]
    fn min_max_window() {
        let mut f = GrayFrame::filled(9, 9, 100).unwrap();
        f.set(4, 4, 3);
        let (lo, hi) = min_max_filter(&f, 2);
        assert_eq!(lo[2 * 9 + 2], 3);
        assert_eq!(lo[9 + 1], 100);
        assert_eq!(hi[4 * 9 + 4], 100);
    }

    #[test]
    fn pgm_round_trip() {
        let f = ramp(17, 5);
        let mut buf = Vec::new();
        write_pgm(&mut buf, &f).unwrap();
        let back = read_pgm(&buf[..], StreamId::Eye).unwrap();
        assert_eq!(back.pixels(), f.pixels());
        assert!(read_pgm(&b"P6\n1 1\n255\n\0"[..], StreamId::Eye).is_err());
    }

    #[test]
    fn median_of_mixed_frame() {
        let mut px = vec![10u8; 40];
        px.extend(vec![200u8; 60]);
        let f = GrayFrame::new(10, 10, px, 0.0, StreamId::Eye).unwrap();
        assert_eq!(median_intensity(&f), 200);
    }
}

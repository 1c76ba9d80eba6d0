//! "Dark" intensity level from the lowest spike of the intensity histogram.
//!
//! The histogram uses bins four intensity levels wide. A spike is a bin that
//! is a local maximum and holds at least 1% of the pixels; the lowest such bin
//! wins and its mean intensity, plus the user offset, is the dark threshold.

use thiserror::Error;

use crate::types::GrayFrame;

pub const BIN_WIDTH: usize = 4;
const BINS: usize = 256 / BIN_WIDTH;
pub const SPIKE_FRACTION: f64 = 0.01;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum HistogramError {
    #[error("histogram of an empty region")]
    EmptyRegion,
}

/// Mean intensity of the lowest histogram spike.
pub fn lowest_spike(pixels: &[u8]) -> Result<u8, HistogramError> {
    if pixels.is_empty() {
        return Err(HistogramError::EmptyRegion);
    }
    let mut counts = [0usize; BINS];
    let mut sums = [0u64; BINS];
    for &p in pixels {
        let b = p as usize / BIN_WIDTH;
        counts[b] += 1;
        sums[b] += p as u64;
    }
    let min_count = (SPIKE_FRACTION * pixels.len() as f64).ceil() as usize;
    let spike = (0..BINS).find(|&b| {
        let c = counts[b];
        let left = if b == 0 { 0 } else { counts[b - 1] };
        let right = if b + 1 == BINS { 0 } else { counts[b + 1] };
        c > 0 && c >= min_count && c >= left && c >= right
    });
    // The global maximum always qualifies, so a spike exists for non-empty input.
    let b = spike.expect("global maximum bin is a spike");
    Ok(((sums[b] as f64) / counts[b] as f64).round() as u8)
}

/// Dark threshold of `frame`: lowest spike plus `offset`, saturating at 255.
pub fn dark_threshold(frame: &GrayFrame, offset: u8) -> Result<u8, HistogramError> {
    Ok(lowest_spike(frame.pixels())?.saturating_add(offset))
}

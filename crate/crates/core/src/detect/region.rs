//! Coarse pupil localisation with a center-surround box feature.
//!
//! The kernel is a square of half-side `r` surrounded by a square of half-side
//! `round(1.5 r)`. Its response is the mean intensity of the surrounding ring
//! minus the mean intensity of the inner square, so a dark blob on a bright
//! background scores high. Box sums come from an integral image.

use serde::{Deserialize, Serialize};

use crate::config::DetectorParams;
use crate::image::IntegralImage;
use crate::types::{FrameError, GrayFrame, Point2, Rect};

/// Outer half-side of the kernel for inner half-side `r`.
pub fn surround_half(r: usize) -> usize {
    ((1.5 * r as f64).round() as usize).max(r + 1)
}

/// Half-side of the stage window in units of the winning inner half-side.
/// The window is never smaller than twice the largest kernel scale, so a
/// pupil that is only partly covered by a small kernel still fits inside.
pub const ROI_REACH: usize = 3;

/// Best center-surround response in a frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoarseRegion {
    /// Kernel center (continuous pixel coordinates).
    pub center: Point2,
    /// Inner half-side of the winning kernel.
    pub radius: usize,
    /// Mean surround minus mean center intensity.
    pub response: f64,
    /// The winning kernel's outer square, fully inside the frame.
    pub square: Rect,
    /// Search window handed to the later stages, clamped to the frame.
    pub roi: Rect,
}

/// Kernel response with top-left corner of the outer square at `(x0, y0)`.
#[inline]
pub fn kernel_response(ii: &IntegralImage, x0: usize, y0: usize, r: usize) -> f64 {
    let ro = surround_half(r);
    let side = 2 * ro;
    let outer = ii.box_sum(x0, y0, x0 + side, y0 + side) as f64;
    let off = ro - r;
    let inner = ii.box_sum(x0 + off, y0 + off, x0 + off + 2 * r, y0 + off + 2 * r) as f64;
    let inner_area = (4 * r * r) as f64;
    let ring_area = (side * side) as f64 - inner_area;
    (outer - inner) / ring_area - inner / inner_area
}

/// Kernel radii evaluated for `params`, smallest first, limited to those that fit.
pub fn kernel_scales(params: &DetectorParams, width: usize, height: usize) -> Vec<usize> {
    let (lo, hi) = params.coarse_radius_range;
    let mut out: Vec<usize> = Vec::new();
    let mut r = lo.max(1.0);
    while r <= hi + 1e-9 {
        let ri = r.round() as usize;
        if 2 * surround_half(ri) <= width.min(height) && out.last() != Some(&ri) {
            out.push(ri);
        }
        r *= 1.25;
    }
    out
}

/// Locates the strongest center-surround response in `frame`.
pub fn coarse_pupil_region(
    frame: &GrayFrame,
    params: &DetectorParams,
) -> Result<CoarseRegion, FrameError> {
    let (w, h) = (frame.width(), frame.height());
    let scales = kernel_scales(params, w, h);
    if scales.is_empty() {
        return Err(FrameError::TooSmall {
            width: w,
            height: h,
            needed: 2 * surround_half(params.coarse_radius_range.0.max(1.0).round() as usize),
        });
    }
    let ii = IntegralImage::new(frame);

    // Coarse scan on a stride proportional to the scale, then a dense local refinement.
    let mut best = (f64::NEG_INFINITY, 0usize, 0usize, scales[0]);
    for &r in &scales {
        let side = 2 * surround_half(r);
        let stride = (r / 4).max(1);
        for y0 in (0..=h - side).step_by(stride) {
            for x0 in (0..=w - side).step_by(stride) {
                let v = kernel_response(&ii, x0, y0, r);
                if v > best.0 {
                    best = (v, x0, y0, r);
                }
            }
        }
    }
    let (_, bx, by, br) = best;
    let side = 2 * surround_half(br);
    let reach = (br / 4).max(1);
    let mut refined = best;
    for y0 in by.saturating_sub(reach)..=(by + reach).min(h - side) {
        for x0 in bx.saturating_sub(reach)..=(bx + reach).min(w - side) {
            let v = kernel_response(&ii, x0, y0, br);
            if v > refined.0 {
                refined = (v, x0, y0, br);
            }
        }
    }
    let (response, x0, y0, r) = refined;
    let half = surround_half(r);
    let center = Point2::new(x0 as f64 + half as f64 - 0.5, y0 as f64 + half as f64 - 0.5);
    let reach = (ROI_REACH * r).max(2 * scales[scales.len() - 1]);
    let cx = x0 + half;
    let cy = y0 + half;
    let rx0 = cx.saturating_sub(reach);
    let ry0 = cy.saturating_sub(reach);
    let roi = Rect::new(rx0, ry0, cx + reach - rx0, cy + reach - ry0).clamp_to(w, h);
    Ok(CoarseRegion {
        center,
        radius: r,
        response: if response.is_finite() { response } else { 0.0 },
        square: Rect::new(x0, y0, 2 * half, 2 * half),
        roi,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::StreamId;

    /// Direct summation oracle: response of every kernel placement at every scale.
    fn brute_force(frame: &GrayFrame, params: &DetectorParams) -> (f64, Point2) {
        let (w, h) = (frame.width(), frame.height());
        let mut best = (f64::NEG_INFINITY, Point2::default());
        for r in kernel_scales(params, w, h) {
            let ro = surround_half(r);
            for y0 in 0..=h - 2 * ro {
                for x0 in 0..=w - 2 * ro {
                    let (mut inner, mut ring, mut ni, mut nr) = (0f64, 0f64, 0f64, 0f64);
                    for y in y0..y0 + 2 * ro {
                        for x in x0..x0 + 2 * ro {
                            let v = frame.get(x, y) as f64;
                            let inside = x >= x0 + ro - r
                                && x < x0 + ro + r
                                && y >= y0 + ro - r
                                && y < y0 + ro + r;
                            if inside {
                                inner += v;
                                ni += 1.0;
                            } else {
                                ring += v;
                                nr += 1.0;
                            }
                        }
                    }
                    let resp = ring / nr - inner / ni;
                    if resp > best.0 {
                        best = (
                            resp,
                            Point2::new(x0 as f64 + ro as f64 - 0.5, y0 as f64 + ro as f64 - 0.5),
                        );
                    }
                }
            }
        }
        best
    }

    fn disk_frame(w: usize, h: usize, disks: &[(f64, f64, f64, u8)]) -> GrayFrame {
        let mut px = vec![200u8; w * h];
        for y in 0..h {
            for x in 0..w {
                for &(cx, cy, r, v) in disks {
                    if (x as f64 - cx).hypot(y as f64 - cy) <= r {
                        px[y * w + x] = v;
                    }
                }
            }
        }
        GrayFrame::new(w, h, px, 0.0, StreamId::Eye).unwrap()
    }

    fn small_params() -> DetectorParams {
        DetectorParams {
            coarse_radius_range: (12.0, 30.0),
            ..Default::default()
        }
    }

    #[test]
    fn finds_single_disk() {
        let f = disk_frame(200, 160, &[(100.0, 80.0, 30.0, 20)]);
        let p = small_params();
        let region = coarse_pupil_region(&f, &p).unwrap();
        let (oracle_resp, oracle_center) = brute_force(&f, &p);
        assert!(region.center.distance(Point2::new(100.0, 80.0)) <= 5.0, "{region:?}");
        assert!(oracle_center.distance(Point2::new(100.0, 80.0)) <= 5.0);
        // the stride search may stop a little short of the exhaustive optimum
        assert!(region.response >= 0.95 * oracle_resp);
        assert!(region.roi.contains(100, 80));
    }

    #[test]
    fn prefers_darker_disk() {
        let f = disk_frame(
            240,
            120,
            &[(60.0, 60.0, 25.0, 90), (180.0, 60.0, 25.0, 10)],
        );
        let p = small_params();
        let region = coarse_pupil_region(&f, &p).unwrap();
        let (_, oracle_center) = brute_force(&f, &p);
        assert!(region.center.distance(Point2::new(180.0, 60.0)) <= 5.0, "{region:?}");
        assert!(oracle_center.distance(Point2::new(180.0, 60.0)) <= 5.0);
    }

    #[test]
    fn uniform_frame_has_zero_response() {
        let f = GrayFrame::filled(120, 100, 128).unwrap();
        let region = coarse_pupil_region(&f, &small_params()).unwrap();
        assert_eq!(region.response, 0.0);
        assert!(region.square.x + region.square.width <= 120);
    }

    #[test]
    fn frame_too_small() {
        let f = GrayFrame::filled(20, 20, 128).unwrap();
        let p = DetectorParams {
            coarse_radius_range: (10.0, 40.0),
            ..Default::default()
        };
        assert!(matches!(
            coarse_pupil_region(&f, &p),
            Err(FrameError::TooSmall { .. })
        ));
    }
}

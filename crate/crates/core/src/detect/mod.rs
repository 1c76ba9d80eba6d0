//! Dark-pupil detection on a single grayscale eye frame.
//!
//! Stages: coarse center-surround localisation, Canny edges inside the
//! resulting window, a dark threshold from the intensity histogram, removal
//! of edges that are not near dark pixels or are near specular reflections,
//! contour extraction, curvature splitting, and an ellipse support search.

pub mod canny;
pub mod contour;
pub mod debug;
pub mod filter;
pub mod fit;
pub mod histogram;
pub mod region;
pub mod search;
pub mod split;

use serde::Serialize;

use crate::config::DetectorParams;
use crate::types::{norm_from_pixel, Ellipse, FrameError, GrayFrame, Point2, PupilDatum, Rect};

pub use canny::{canny_edges, canny_with_thresholds, EdgeMap};
pub use contour::{extract_contours, Contour};
pub use filter::filter_edges;
pub use fit::{circumference, fit_ellipse, FitError};
pub use histogram::dark_threshold;
pub use region::{coarse_pupil_region, CoarseRegion};
pub use search::{combinatorial_search, CandidateFit};
pub use split::split_contours;

/// Intermediate products of one detection, in the coordinates of the
/// stage window unless noted.
#[derive(Debug, Clone, Serialize)]
pub struct DetectionTrace {
    /// User region of interest actually applied, frame coordinates.
    pub user_roi: Rect,
    /// Coarse region in user-ROI coordinates.
    pub region: Option<CoarseRegion>,
    /// Stage window in frame coordinates.
    pub window: Rect,
    pub dark: u8,
    #[serde(skip)]
    pub edges: Option<EdgeMap>,
    #[serde(skip)]
    pub filtered: Option<EdgeMap>,
    pub contours: Vec<Contour>,
    pub sub_contours: Vec<Contour>,
    /// Seeds and best candidate, frame coordinates.
    pub seeds: Vec<CandidateFit>,
    pub best: Option<CandidateFit>,
    pub refits: usize,
    pub result: Option<PupilDatum>,
}

/// Runs the full detector. `Ok(None)` means no pupil was found.
pub fn detect(frame: &GrayFrame, params: &DetectorParams) -> Result<Option<PupilDatum>, FrameError> {
    detect_with_trace(frame, params).map(|t| t.result)
}

/// Placeholder datum for frames without a detection: zero confidence,
/// frame-centre position.
pub fn no_pupil(frame: &GrayFrame) -> PupilDatum {
    let c = Point2::new(frame.width() as f64 / 2.0, frame.height() as f64 / 2.0);
    PupilDatum {
        ellipse: Ellipse::circle(c, 1.0),
        norm_pos: Point2::new(0.5, 0.5),
        confidence: 0.0,
        timestamp: frame.timestamp,
    }
}

/// Fraction of outline samples that must be brighter than `dark` just
/// outside the candidate ellipse.
pub const MIN_OUTLINE_CONTRAST: f64 = 0.8;
/// Distance outside the outline at which contrast is sampled, pixels.
const CONTRAST_OFFSET: f64 = 2.5;
const CONTRAST_SAMPLES: usize = 64;

/// Fraction of points just outside `e` whose intensity exceeds `dark`.
/// An ellipse fitted to part of the pupil boundary plus an unrelated edge
/// usually cuts through the pupil, leaving dark pixels outside it.
pub fn outline_contrast(frame: &GrayFrame, e: &Ellipse, dark: u8) -> f64 {
    let mut bright = 0usize;
    let mut total = 0usize;
    for p in e.sample(CONTRAST_SAMPLES) {
        let d = p - e.center;
        let len = d.x.hypot(d.y);
        if len == 0.0 {
            continue;
        }
        let q = p + d * (CONTRAST_OFFSET / len);
        if q.x < 0.0 || q.y < 0.0 || q.x > (frame.width() - 1) as f64 || q.y > (frame.height() - 1) as f64 {
            continue;
        }
        total += 1;
        if crate::image::bilinear(frame, q.x, q.y) > dark as f64 {
            bright += 1;
        }
    }
    if total == 0 {
        0.0
    } else {
        bright as f64 / total as f64
    }
}

pub fn detect_with_trace(
    frame: &GrayFrame,
    params: &DetectorParams,
) -> Result<DetectionTrace, FrameError> {
    let user_roi = params
        .roi
        .map(|r| r.clamp_to(frame.width(), frame.height()))
        .filter(|r| !r.is_empty())
        .unwrap_or_else(|| Rect::full(frame.width(), frame.height()));
    let view = if user_roi == Rect::full(frame.width(), frame.height()) {
        None
    } else {
        Some(frame.crop(user_roi))
    };
    let view_ref = view.as_ref().unwrap_or(frame);

    let region = coarse_pupil_region(view_ref, params)?;
    let mut trace = DetectionTrace {
        user_roi,
        region: Some(region),
        window: Rect::new(
            region.roi.x + user_roi.x,
            region.roi.y + user_roi.y,
            region.roi.width,
            region.roi.height,
        ),
        dark: 0,
        edges: None,
        filtered: None,
        contours: Vec::new(),
        sub_contours: Vec::new(),
        seeds: Vec::new(),
        best: None,
        refits: 0,
        result: None,
    };
    if region.response <= 0.0 {
        return Ok(trace);
    }

    let window = view_ref.crop(region.roi);
    let edges = canny_edges(&window, params.canny_auto_sigma);
    // an empty window cannot occur: the region ROI always contains the kernel
    let dark = dark_threshold(&window, params.histogram_offset).unwrap_or(0);
    let filtered = filter_edges(&edges, &window, dark, params.reflection_saturation);
    let contours: Vec<Contour> = extract_contours(&filtered)
        .into_iter()
        .map(|c| Contour::new(c.points.iter().map(|&p| filtered.refine(p)).collect()))
        .collect();
    let subs = search::split_inconsistent(&split_contours(&contours, params.curvature_split_angle));
    let report = search::search_with_report(&subs, params, |e| {
        outline_contrast(&window, e, dark) >= MIN_OUTLINE_CONTRAST
    });

    let (ox, oy) = (trace.window.x as f64, trace.window.y as f64);
    let shift = |c: &CandidateFit| CandidateFit {
        ellipse: c.ellipse.translated(ox, oy),
        ..c.clone()
    };
    trace.dark = dark;
    trace.seeds = report.seeds.iter().map(shift).collect();
    trace.best = report.best.as_ref().map(shift);
    trace.refits = report.refits;
    trace.result = trace
        .best
        .as_ref()
        .filter(|b| b.confidence >= params.confidence_threshold)
        .map(|b| PupilDatum {
            ellipse: b.ellipse,
            norm_pos: norm_from_pixel(b.ellipse.center, frame.width(), frame.height()),
            confidence: b.confidence,
            timestamp: frame.timestamp,
        });
    trace.edges = Some(edges);
    trace.filtered = Some(filtered);
    trace.contours = contours;
    trace.sub_contours = subs;
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::StreamId;

    fn render(w: usize, h: usize, e: &Ellipse) -> GrayFrame {
        let mut px = vec![0u8; w * h];
        for y in 0..h {
            for x in 0..w {
                let mut cov = 0.0f64;
                for sy in 0..4 {
                    for sx in 0..4 {
                        let p = Point2::new(
                            x as f64 - 0.375 + 0.25 * sx as f64,
                            y as f64 - 0.375 + 0.25 * sy as f64,
                        );
                        if e.contains(p) {
                            cov += 1.0 / 16.0;
                        }
                    }
                }
                px[y * w + x] = (190.0 - 170.0 * cov).round() as u8;
            }
        }
        GrayFrame::new(w, h, px, 1.5, StreamId::Eye).unwrap()
    }

    #[test]
    fn clean_disk_is_found() {
        let truth = Ellipse::circle(Point2::new(320.0, 240.0), 40.0);
        let f = render(640, 480, &truth);
        let d = detect(&f, &DetectorParams::default()).unwrap().unwrap();
        assert!(d.ellipse.center.distance(truth.center) <= 1.0, "{d:?}");
        assert!(d.confidence >= 0.9);
        assert_eq!(d.timestamp, 1.5);
        assert!((d.norm_pos.x - 0.5).abs() < 0.01);
    }

    #[test]
    fn uniform_frame_has_no_pupil() {
        let f = GrayFrame::filled(640, 480, 128).unwrap();
        assert!(detect(&f, &DetectorParams::default()).unwrap().is_none());
    }

    #[test]
    fn user_roi_offsets_are_restored() {
        let truth = Ellipse::new(Point2::new(400.0, 200.0), 35.0, 28.0, 0.3);
        let f = render(640, 480, &truth);
        let params = DetectorParams {
            roi: Some(Rect::new(250, 60, 300, 300)),
            ..Default::default()
        };
        let d = detect(&f, &params).unwrap().unwrap();
        assert!(d.ellipse.center.distance(truth.center) <= 1.0, "{d:?}");
    }
}

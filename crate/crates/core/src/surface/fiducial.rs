//! Square fiducials carrying one of 64 ids, and planar surfaces tagged
//! with them.
//!
//! A marker is a 7x7 cell grid: a dark one-cell border around a 5x5
//! payload. Three payload corners are dark and one is light; the light
//! corner marks the top-left. The remaining 21 payload cells hold 7 bits
//! (6 id bits and an even-parity bit) three times over, the middle copy
//! inverted so no payload is uniformly dark.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detect::{canny_with_thresholds, extract_contours};
use crate::image::{bilinear, intensity_span};
use crate::surface::homography::{estimate_homography, Homography, HomographyError};
use crate::types::{GazeDatum, GrayFrame, Point2};

pub const GRID: usize = 7;
pub const MARKER_COUNT: usize = 64;
const BITS: usize = 7;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SurfaceError {
    #[error("marker id {0} out of range (0..64)")]
    MarkerId(u32),
    #[error("surface {0} defines no markers")]
    NoMarkers(String),
    #[error("surface {name}: marker {id} corners are not finite")]
    BadCorners { name: String, id: u8 },
    #[error("none of the markers of surface {0} is visible")]
    NotVisible(String),
    #[error(transparent)]
    Homography(#[from] HomographyError),
}

/// Payload cells (row, col) that hold bits, in bit-assignment order.
fn data_cells() -> impl Iterator<Item = (usize, usize)> {
    (0..5)
        .flat_map(|r| (0..5).map(move |c| (r, c)))
        .filter(|&(r, c)| !((r == 0 || r == 4) && (c == 0 || c == 4)))
}

fn code_bits(id: u8) -> [bool; BITS] {
    let mut bits = [false; BITS];
    for (k, b) in bits.iter_mut().enumerate().take(6) {
        *b = (id >> k) & 1 == 1;
    }
    bits[6] = bits[..6].iter().filter(|b| **b).count() % 2 == 1;
    bits
}

/// Cell pattern of marker `id`, `[row][col]`, `true` for dark.
pub fn marker_cells(id: u8) -> Result<[[bool; GRID]; GRID], SurfaceError> {
    if id as usize >= MARKER_COUNT {
        return Err(SurfaceError::MarkerId(id as u32));
    }
    let mut g = [[true; GRID]; GRID];
    let bits = code_bits(id);
    g[1][1] = false;
    for (k, (r, c)) in data_cells().enumerate() {
        let bit = bits[k % BITS];
        g[r + 1][c + 1] = if k / BITS == 1 { !bit } else { bit };
    }
    Ok(g)
}

/// Decodes a sampled 7x7 grid already oriented with the light corner at
/// the top-left of the payload.
fn decode_oriented(g: &[[bool; GRID]; GRID]) -> Option<u8> {
    let mut votes = [0u8; BITS];
    for (k, (r, c)) in data_cells().enumerate() {
        let dark = g[r + 1][c + 1];
        let bit = if k / BITS == 1 { !dark } else { dark };
        votes[k % BITS] += bit as u8;
    }
    let bits: Vec<bool> = votes.iter().map(|v| *v >= 2).collect();
    let id = (0..6).fold(0u8, |acc, k| acc | ((bits[k] as u8) << k));
    (code_bits(id)[6] == bits[6]).then_some(id)
}

/// A detected marker. Corners run clockwise on screen from the top-left of
/// the payload, in pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Marker {
    pub id: u8,
    pub corners: [Point2; 4],
}

/// Twice the signed area; positive for clockwise-on-screen order.
fn signed_area(q: &[Point2; 4]) -> f64 {
    (0..4)
        .map(|i| {
            let (a, b) = (q[i], q[(i + 1) % 4]);
            a.x * b.y - b.x * a.y
        })
        .sum()
}

fn line_distance(p: Point2, a: Point2, b: Point2) -> f64 {
    let d = b - a;
    ((p.x - a.x) * d.y - (p.y - a.y) * d.x).abs() / d.x.hypot(d.y)
}

/// Four extreme points of a point set that outlines a quadrilateral.
fn quad_from_points(pts: &[Point2]) -> Option<[Point2; 4]> {
    let n = pts.len() as f64;
    let c = Point2::new(
        pts.iter().map(|p| p.x).sum::<f64>() / n,
        pts.iter().map(|p| p.y).sum::<f64>() / n,
    );
    let far = |from: Point2| {
        pts.iter()
            .copied()
            .max_by(|a, b| a.distance(from).total_cmp(&b.distance(from)))
    };
    let p1 = far(c)?;
    let p2 = far(p1)?;
    let diag = p1.distance(p2);
    let d = p2 - p1;
    let side = |p: &Point2| (p.x - p1.x) * d.y - (p.y - p1.y) * d.x;
    let p3 = pts.iter().copied().max_by(|a, b| side(a).total_cmp(&side(b)))?;
    let p4 = pts.iter().copied().min_by(|a, b| side(a).total_cmp(&side(b)))?;
    if side(&p3) / diag < 0.3 * diag || -side(&p4) / diag < 0.3 * diag {
        return None;
    }
    let mut q = [p1, p3, p2, p4];
    if signed_area(&q) < 0.0 {
        q.swap(1, 3);
    }
    Some(q)
}

/// Replaces the extreme-point corners by intersections of lines fitted to
/// the middle of each side, so clipped corners do not tilt the sides.
fn fit_sides(pts: &[Point2], q: &[Point2; 4]) -> Option<[Point2; 4]> {
    let mut lines = Vec::with_capacity(4);
    for i in 0..4 {
        let (a, b) = (q[i], q[(i + 1) % 4]);
        let d = b - a;
        let len2 = d.x * d.x + d.y * d.y;
        let side: Vec<Point2> = pts
            .iter()
            .copied()
            .filter(|p| {
                let t = ((p.x - a.x) * d.x + (p.y - a.y) * d.y) / len2;
                let nearest = (0..4)
                    .min_by(|&j, &k| {
                        line_distance(*p, q[j], q[(j + 1) % 4]).total_cmp(&line_distance(*p, q[k], q[(k + 1) % 4]))
                    })
                    .unwrap_or(i);
                nearest == i && (0.15..=0.85).contains(&t)
            })
            .collect();
        if side.len() < 3 {
            return None;
        }
        lines.push(fit_line(&side)?);
    }
    let mut out = [Point2::new(0.0, 0.0); 4];
    for i in 0..4 {
        out[i] = intersect(lines[(i + 3) % 4], lines[i])?;
    }
    Some(out)
}

/// Maps marker grid coordinates (cell units, 0..7) to pixels.
fn grid_map(corners: &[Point2; 4]) -> Option<Homography> {
    let g = GRID as f64;
    let grid = [
        Point2::new(0.0, 0.0),
        Point2::new(g, 0.0),
        Point2::new(g, g),
        Point2::new(0.0, g),
    ];
    let pairs: Vec<_> = grid.iter().copied().zip(corners.iter().copied()).collect();
    estimate_homography(&pairs).ok()
}

fn sample(frame: &GrayFrame, p: Point2) -> Option<f64> {
    let inside = p.x >= 0.0
        && p.y >= 0.0
        && p.x <= (frame.width() - 1) as f64
        && p.y <= (frame.height() - 1) as f64;
    inside.then(|| bilinear(frame, p.x, p.y))
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

/// Dark level from border cells and light level just outside the marker.
fn local_levels(frame: &GrayFrame, h: &Homography) -> Option<(f64, f64)> {
    let g = GRID as f64;
    let mut dark = Vec::new();
    let mut light = Vec::new();
    for i in 0..GRID {
        let t = i as f64 + 0.5;
        for (u, v) in [(t, 0.5), (t, g - 0.5), (0.5, t), (g - 0.5, t)] {
            dark.push(sample(frame, h.apply(Point2::new(u, v)).ok()?)?);
        }
        for (u, v) in [(t, -0.5), (t, g + 0.5), (-0.5, t), (g + 0.5, t)] {
            light.push(sample(frame, h.apply(Point2::new(u, v)).ok()?)?);
        }
    }
    Some((median(dark), median(light)))
}

/// Minimum light-dark difference for a marker, intensity levels.
const MIN_CONTRAST: f64 = 40.0;

/// Moves each side onto the subpixel light/dark crossing and intersects
/// adjacent sides.
fn refine_corners(frame: &GrayFrame, q: &[Point2; 4], threshold: f64) -> Option<[Point2; 4]> {
    let centre = Point2::new(
        q.iter().map(|p| p.x).sum::<f64>() / 4.0,
        q.iter().map(|p| p.y).sum::<f64>() / 4.0,
    );
    let mut lines = Vec::with_capacity(4);
    for i in 0..4 {
        let (a, b) = (q[i], q[(i + 1) % 4]);
        let len = a.distance(b);
        let dir = (b - a) * (1.0 / len);
        let mut normal = Point2::new(dir.y, -dir.x);
        let mid = (a + b) * 0.5;
        if (mid - centre).x * normal.x + (mid - centre).y * normal.y < 0.0 {
            normal = normal * -1.0;
        }
        let reach = (0.4 * len / GRID as f64).clamp(1.0, 3.0);
        let steps = (len * 0.7).ceil().max(8.0) as usize;
        let mut hits = Vec::with_capacity(steps);
        for k in 0..=steps {
            let base = a + (b - a) * (0.15 + 0.7 * k as f64 / steps as f64);
            let mut prev: Option<(f64, f64)> = None;
            let mut s = -reach;
            while s <= reach + 1e-9 {
                let v = sample(frame, base + normal * s)?;
                if let Some((ps, pv)) = prev {
                    if pv < threshold && v >= threshold {
                        let f = (threshold - pv) / (v - pv);
                        hits.push(base + normal * (ps + f * (s - ps)));
                        break;
                    }
                }
                prev = Some((s, v));
                s += 0.25;
            }
        }
        if hits.len() < 4 {
            return None;
        }
        lines.push(fit_line(&hits)?);
    }
    let mut out = [Point2::new(0.0, 0.0); 4];
    for i in 0..4 {
        out[i] = intersect(lines[(i + 3) % 4], lines[i])?;
    }
    Some(out)
}

/// Total least-squares line as (point, unit direction).
fn fit_line(pts: &[Point2]) -> Option<(Point2, Point2)> {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.x).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.y).sum::<f64>() / n;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for p in pts {
        let (dx, dy) = (p.x - mx, p.y - my);
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    let angle = 0.5 * (2.0 * sxy).atan2(sxx - syy);
    let dir = Point2::new(angle.cos(), angle.sin());
    dir.is_finite().then_some((Point2::new(mx, my), dir))
}

fn intersect((p, d): (Point2, Point2), (q, e): (Point2, Point2)) -> Option<Point2> {
    let den = d.x * e.y - d.y * e.x;
    if den.abs() < 1e-9 {
        return None;
    }
    let t = ((q.x - p.x) * e.y - (q.y - p.y) * e.x) / den;
    Some(p + d * t)
}

fn sample_grid(frame: &GrayFrame, h: &Homography, threshold: f64) -> Option<[[bool; GRID]; GRID]> {
    let mut g = [[false; GRID]; GRID];
    for (r, row) in g.iter_mut().enumerate() {
        for (c, cell) in row.iter_mut().enumerate() {
            let p = h.apply(Point2::new(c as f64 + 0.5, r as f64 + 0.5)).ok()?;
            *cell = sample(frame, p)? < threshold;
        }
    }
    Some(g)
}

/// Reads a candidate quadrilateral; `None` if it is not a valid marker.
fn read_marker(frame: &GrayFrame, coarse: &[Point2; 4]) -> Option<Marker> {
    let h = grid_map(coarse)?;
    let (dark, light) = local_levels(frame, &h)?;
    if light - dark < MIN_CONTRAST {
        return None;
    }
    let threshold = 0.5 * (dark + light);
    let corners = refine_corners(frame, coarse, threshold)?;
    let h = grid_map(&corners)?;
    let g = sample_grid(frame, &h, threshold)?;
    let border_dark = (0..GRID).all(|i| g[0][i] && g[GRID - 1][i] && g[i][0] && g[i][GRID - 1]);
    if !border_dark {
        return None;
    }
    // light payload corner, clockwise from the top-left of this sampling
    let payload_corners = [g[1][1], g[1][5], g[5][5], g[5][1]];
    let light_corners: Vec<usize> = (0..4).filter(|&k| !payload_corners[k]).collect();
    let &[rot] = light_corners.as_slice() else {
        return None;
    };
    let oriented = [
        corners[rot],
        corners[(rot + 1) % 4],
        corners[(rot + 2) % 4],
        corners[(rot + 3) % 4],
    ];
    let g = sample_grid(frame, &grid_map(&oriented)?, threshold)?;
    let id = decode_oriented(&g)?;
    Some(Marker { id, corners: oriented })
}

/// Minimum marker side in pixels (two pixels per cell).
const MIN_SIDE: f64 = 14.0;

/// Finds all markers in `frame`, ordered by id.
pub fn detect_markers(frame: &GrayFrame) -> Vec<Marker> {
    let (lo, hi) = intensity_span(frame);
    let span = (hi as f32 - lo as f32).max(0.0);
    if (span as f64) < MIN_CONTRAST {
        return Vec::new();
    }
    let edges = canny_with_thresholds(frame, 1.0, 0.5 * span, span);
    let mut found: Vec<Marker> = Vec::new();
    for contour in extract_contours(&edges) {
        // a one-pixel 8-connected outline of a diagonal square holds side * 4 / sqrt 2 pixels
        if (contour.len() as f64) < 4.0 * MIN_SIDE * std::f64::consts::FRAC_1_SQRT_2 {
            continue;
        }
        let Some(q) = quad_from_points(&contour.points).and_then(|q| fit_sides(&contour.points, &q)) else {
            continue;
        };
        let sides: Vec<f64> = (0..4).map(|i| q[i].distance(q[(i + 1) % 4])).collect();
        let (smin, smax) = sides
            .iter()
            .fold((f64::MAX, 0f64), |(a, b), s| (a.min(*s), b.max(*s)));
        if smin < MIN_SIDE || smax > 4.0 * smin {
            continue;
        }
        let tol = (0.05 * smin).max(1.5);
        let on_outline = contour.points.iter().all(|p| {
            (0..4)
                .map(|i| line_distance(*p, q[i], q[(i + 1) % 4]))
                .fold(f64::MAX, f64::min)
                <= tol
        });
        if !on_outline {
            continue;
        }
        if let Some(m) = read_marker(frame, &q) {
            let centre = |m: &Marker| m.corners.iter().fold(Point2::new(0.0, 0.0), |a, p| a + *p * 0.25);
            let dup = found
                .iter()
                .any(|f| f.id == m.id && centre(f).distance(centre(&m)) < 0.5 * smin);
            if !dup {
                found.push(m);
            }
        }
    }
    found.sort_by_key(|m| m.id);
    found
}

/// A planar surface: marker corners in surface-normalized coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceDefinition {
    pub name: String,
    pub markers: BTreeMap<u8, [Point2; 4]>,
}

impl SurfaceDefinition {
    pub fn validate(&self) -> Result<(), SurfaceError> {
        if self.markers.is_empty() {
            return Err(SurfaceError::NoMarkers(self.name.clone()));
        }
        for (&id, corners) in &self.markers {
            if id as usize >= MARKER_COUNT {
                return Err(SurfaceError::MarkerId(id as u32));
            }
            if corners.iter().any(|p| !p.is_finite()) {
                return Err(SurfaceError::BadCorners {
                    name: self.name.clone(),
                    id,
                });
            }
        }
        Ok(())
    }
}

/// Pose of a surface in one scene frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceLocation {
    pub name: String,
    /// Scene-normalized to surface-normalized coordinates.
    pub to_surface: Homography,
    pub markers_used: Vec<u8>,
}

/// Estimates the surface pose from every visible marker's corners.
pub fn locate_surface(
    def: &SurfaceDefinition,
    markers: &[Marker],
    width: usize,
    height: usize,
) -> Result<SurfaceLocation, SurfaceError> {
    def.validate()?;
    let mut pairs = Vec::new();
    let mut used = Vec::new();
    for m in markers {
        if let Some(surface) = def.markers.get(&m.id) {
            used.push(m.id);
            for (img, s) in m.corners.iter().zip(surface) {
                let n = Point2::new(img.x / width as f64, img.y / height as f64);
                pairs.push((n, *s));
            }
        }
    }
    if used.is_empty() {
        return Err(SurfaceError::NotVisible(def.name.clone()));
    }
    Ok(SurfaceLocation {
        name: def.name.clone(),
        to_surface: estimate_homography(&pairs)?,
        markers_used: used,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurfaceGaze {
    pub point: Point2,
    pub on_surface: bool,
}

/// Maps a gaze point into surface coordinates with a scene-normalized to
/// surface-normalized homography.
pub fn map_gaze_to_surface(g: &GazeDatum, to_surface: &Homography) -> Result<SurfaceGaze, HomographyError> {
    let point = to_surface.apply(g.norm_pos)?;
    Ok(SurfaceGaze {
        point,
        on_surface: (0.0..=1.0).contains(&point.x) && (0.0..=1.0).contains(&point.y),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_id_round_trips_and_is_unique() {
        let mut seen = std::collections::HashSet::new();
        for id in 0..64u8 {
            let g = marker_cells(id).unwrap();
            assert_eq!(decode_oriented(&g), Some(id));
            assert!(seen.insert(g));
            let corners = [g[1][1], g[1][5], g[5][5], g[5][1]];
            assert_eq!(corners, [false, true, true, true]);
        }
        assert!(marker_cells(64).is_err());
    }

    #[test]
    fn single_flipped_cell_is_corrected() {
        let mut g = marker_cells(37).unwrap();
        g[3][3] = !g[3][3];
        assert_eq!(decode_oriented(&g), Some(37));
    }

    #[test]
    fn blank_frame_has_no_markers() {
        let f = GrayFrame::filled(320, 240, 200).unwrap();
        assert!(detect_markers(&f).is_empty());
    }

    use crate::synth::scene::{render_scene_frame, FiducialPlacement, PlacedSurface, SceneContent, SceneRig};

    fn single(id: u8, to_scene: Homography, noise: f64) -> (GrayFrame, [Point2; 4]) {
        let placed = PlacedSurface {
            name: "card".into(),
            fiducials: vec![FiducialPlacement {
                id,
                origin: Point2::new(0.2, 0.2),
                size: 0.6,
            }],
            to_scene,
        };
        let rig = SceneRig {
            width: 400,
            height: 300,
            noise_sd: noise,
            seed: 9,
            ..Default::default()
        };
        let truth = placed.scene_corners()[0].1;
        let content = SceneContent {
            marker: None,
            surfaces: vec![placed],
        };
        (render_scene_frame(&rig, &content, 0.0), truth)
    }

    fn max_corner_error(a: &[Point2; 4], b: &[Point2; 4]) -> f64 {
        a.iter().zip(b).map(|(p, q)| p.distance(*q)).fold(0.0, f64::max)
    }

    #[test]
    fn axis_aligned_marker() {
        // surface unit square -> 166.7 px square, marker 100 px
        let s = 100.0 / 0.6;
        let h = Homography::from_matrix([[s, 0.0, 97.3], [0.0, s, 48.6], [0.0, 0.0, 1.0]]).unwrap();
        let (f, truth) = single(37, h, 2.0);
        let found = detect_markers(&f);
        assert_eq!(found.len(), 1, "{found:?}");
        assert_eq!(found[0].id, 37);
        assert!(max_corner_error(&found[0].corners, &truth) < 0.5, "{found:?} {truth:?}");
    }

    #[test]
    fn perspective_marker() {
        let h = Homography::from_matrix([[150.0, 25.0, 110.0], [-10.0, 140.0, 60.0], [0.2, 0.1, 1.0]]).unwrap();
        let (f, truth) = single(11, h, 0.0);
        let found = detect_markers(&f);
        assert_eq!(found.len(), 1, "{found:?}");
        assert_eq!(found[0].id, 11);
        assert!(max_corner_error(&found[0].corners, &truth) < 1.0);
    }

    #[test]
    fn rotations_keep_id_and_corner_order() {
        let s = 150.0;
        for quarter in 0..4 {
            let (sin, cos) = (quarter as f64 * std::f64::consts::FRAC_PI_2).sin_cos();
            // rotate about the surface centre (0.5, 0.5), then place at (200, 150)
            let m = [
                [s * cos, -s * sin, 200.0 - s * (0.5 * cos - 0.5 * sin)],
                [s * sin, s * cos, 150.0 - s * (0.5 * sin + 0.5 * cos)],
                [0.0, 0.0, 1.0],
            ];
            let (f, truth) = single(52, Homography::from_matrix(m).unwrap(), 0.0);
            let found = detect_markers(&f);
            assert_eq!(found.len(), 1, "quarter {quarter}");
            assert_eq!(found[0].id, 52);
            assert!(max_corner_error(&found[0].corners, &truth) < 0.5, "quarter {quarter}");
        }
    }
}

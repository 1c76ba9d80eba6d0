//! Splitting contours where the curvature is discontinuous.
//!
//! The turn angle at sample `i` is the angle between the chords
//! `p[i] - p[i-k]` and `p[i+k] - p[i]` with `k = CHORD_POINTS`. A contour is
//! cut at the sharpest point of every run of samples whose turn angle exceeds
//! the split angle, and the pieces are re-examined until none has such a
//! sample. Cut points are dropped; the order of the remaining points is kept.

use crate::detect::contour::Contour;

pub const CHORD_POINTS: usize = 5;

/// Turn angle in degrees at every sample that has a full chord on both sides
/// (`None` near the ends).
pub fn turn_angles(points: &[crate::types::Point2], k: usize) -> Vec<Option<f64>> {
    let n = points.len();
    (0..n)
        .map(|i| {
            if i < k || i + k >= n {
                return None;
            }
            let v1 = points[i] - points[i - k];
            let v2 = points[i + k] - points[i];
            let n1 = v1.x.hypot(v1.y);
            let n2 = v2.x.hypot(v2.y);
            if n1 == 0.0 || n2 == 0.0 {
                return Some(180.0);
            }
            let c = ((v1.x * v2.x + v1.y * v2.y) / (n1 * n2)).clamp(-1.0, 1.0);
            Some(c.acos().to_degrees())
        })
        .collect()
}

/// Splits every contour until no interior turn angle exceeds `max_angle_deg`.
pub fn split_contours(contours: &[Contour], max_angle_deg: f64) -> Vec<Contour> {
    let mut out = Vec::new();
    for c in contours {
        split_into(&c.points, max_angle_deg, &mut out);
    }
    out
}

fn split_into(points: &[crate::types::Point2], max_angle: f64, out: &mut Vec<Contour>) {
    if points.len() < 2 {
        return;
    }
    let angles = turn_angles(points, CHORD_POINTS);
    let mut cuts = Vec::new();
    let mut i = 0;
    while i < angles.len() {
        if angles[i].is_some_and(|a| a > max_angle) {
            let start = i;
            while i < angles.len() && angles[i].is_some_and(|a| a > max_angle) {
                i += 1;
            }
            let peak = (start..i)
                .max_by(|&a, &b| angles[a].unwrap().total_cmp(&angles[b].unwrap()))
                .unwrap();
            cuts.push(peak);
        } else {
            i += 1;
        }
    }
    if cuts.is_empty() {
        out.push(Contour::new(points.to_vec()));
        return;
    }
    let mut begin = 0;
    for cut in cuts.into_iter().chain(std::iter::once(points.len())) {
        split_into(&points[begin..cut], max_angle, out);
        begin = cut + 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{Ellipse, Point2};

    fn max_interior_angle(c: &Contour) -> f64 {
        turn_angles(&c.points, CHORD_POINTS)
            .into_iter()
            .flatten()
            .fold(0.0, f64::max)
    }

    #[test]
    fn smooth_arc_is_not_split() {
        // densely sampled arc of an a=40, b=25 ellipse: the steepest 5-sample
        // turn is well below 60 degrees (about 5*step/rmin radians)
        let e = Ellipse::new(Point2::new(0.0, 0.0), 40.0, 25.0, 0.3);
        let pts: Vec<_> = (0..150).map(|i| e.point_at(i as f64 * 0.02)).collect();
        let angles = turn_angles(&pts, CHORD_POINTS);
        assert!(angles.iter().flatten().all(|&a| a < 20.0));
        let out = split_contours(&[Contour::new(pts.clone())], 60.0);
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].points, pts);
    }

    #[test]
    fn l_shape_splits_at_corner() {
        let mut pts: Vec<_> = (0..15).map(|x| Point2::new(x as f64, 0.0)).collect();
        pts.extend((1..15).map(|y| Point2::new(14.0, y as f64)));
        let out = split_contours(&[Contour::new(pts.clone())], 60.0);
        assert_eq!(out.len(), 2);
        assert_eq!(out[0].points.last(), Some(&Point2::new(13.0, 0.0)));
        assert_eq!(out[1].points.first(), Some(&Point2::new(14.0, 1.0)));
        assert_eq!(out[0].len() + out[1].len(), pts.len() - 1);
        for c in &out {
            assert!(max_interior_angle(c) <= 60.0);
        }
    }

    #[test]
    fn arc_with_straight_spur_separates() {
        // quarter circle of radius 30 followed by a tangent-breaking segment
        let mut pts: Vec<_> = (0..=47)
            .map(|i| {
                let t = i as f64 / 47.0 * std::f64::consts::FRAC_PI_2;
                Point2::new(30.0 * t.cos(), 30.0 * t.sin())
            })
            .collect();
        let junction = pts.len() - 1;
        let end = pts[junction];
        pts.extend((1..20).map(|i| Point2::new(end.x + i as f64, end.y + 0.2 * i as f64)));
        let out = split_contours(&[Contour::new(pts.clone())], 60.0);
        assert_eq!(out.len(), 2, "{:?}", out.iter().map(Contour::len).collect::<Vec<_>>());
        let cut = out[0].len();
        assert!((cut as i64 - junction as i64).abs() <= 2, "cut {cut} junction {junction}");
    }
}

//! Independent reference implementations used as test oracles.

#![allow(dead_code)]

use gazelab::{GrayFrame, Point2};

/// Adaptive Simpson integration of `f` over `[a, b]` to absolute tolerance `tol`.
pub fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson(fa: f64, fm: f64, fb: f64, a: f64, b: f64) -> f64 {
        (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    }
    #[allow(clippy::too_many_arguments)]
    fn recurse(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = simpson(fa, flm, fm, a, m);
        let right = simpson(fm, frm, fb, m, b);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        recurse(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
            + recurse(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
    }
    let (fa, fm, fb) = (f(a), f(0.5 * (a + b)), f(b));
    recurse(f, a, b, fa, fm, fb, simpson(fa, fm, fb, a, b), tol, 48)
}

/// Exact ellipse perimeter by numerical integration of the arc length.
pub fn perimeter_by_quadrature(a: f64, b: f64) -> f64 {
    let f = |t: f64| (a * a * t.sin().powi(2) + b * b * t.cos().powi(2)).sqrt();
    // four symmetric quarters; integrate one
    4.0 * adaptive_simpson(&f, 0.0, std::f64::consts::FRAC_PI_2, 1e-13)
}

/// Exhaustive nearest-timestamp pairing; ties go to the earlier `a` element.
pub fn brute_force_pairs(a: &[f64], b: &[f64], max_gap: f64) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for (j, &t) in b.iter().enumerate() {
        let mut best: Option<(usize, f64)> = None;
        for (i, &s) in a.iter().enumerate() {
            let d = (s - t).abs();
            if best.is_none_or(|(_, bd)| d < bd) {
                best = Some((i, d));
            }
        }
        if let Some((i, d)) = best {
            if d <= max_gap {
                out.push((i, j));
            }
        }
    }
    out
}

/// Symmetric Hausdorff distance between two point sets by exhaustive search.
pub fn brute_force_hausdorff(p: &[Point2], q: &[Point2]) -> f64 {
    let directed = |p: &[Point2], q: &[Point2]| {
        p.iter()
            .map(|a| q.iter().map(|b| a.distance(*b)).fold(f64::INFINITY, f64::min))
            .fold(0.0, f64::max)
    };
    directed(p, q).max(directed(q, p))
}

/// Copy of `frame` moved by whole pixels; uncovered pixels replicate the
/// nearest border pixel of the source.
pub fn shift_frame(frame: &GrayFrame, dx: i64, dy: i64) -> GrayFrame {
    let (w, h) = (frame.width() as i64, frame.height() as i64);
    let mut out = frame.clone();
    for y in 0..h {
        for x in 0..w {
            let sx = (x - dx).clamp(0, w - 1);
            let sy = (y - dy).clamp(0, h - 1);
            out.set(x as usize, y as usize, frame.get(sx as usize, sy as usize));
        }
    }
    out
}

/// Between-class variance maximizing threshold.
pub fn otsu_threshold(pixels: &[u8]) -> u8 {
    let mut hist = [0u64; 256];
    for &p in pixels {
        hist[p as usize] += 1;
    }
    let total = pixels.len() as f64;
    let sum_all: f64 = hist.iter().enumerate().map(|(i, &c)| i as f64 * c as f64).sum();
    let (mut w0, mut sum0, mut best, mut best_t) = (0.0, 0.0, -1.0, 0u8);
    for t in 0..256 {
        w0 += hist[t] as f64;
        sum0 += t as f64 * hist[t] as f64;
        let w1 = total - w0;
        if w0 == 0.0 || w1 == 0.0 {
            continue;
        }
        let (m0, m1) = (sum0 / w0, (sum_all - sum0) / w1);
        let between = w0 * w1 * (m0 - m1).powi(2);
        if between > best {
            best = between;
            best_t = t as u8;
        }
    }
    best_t
}

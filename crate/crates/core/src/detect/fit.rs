//! Direct least-squares ellipse fitting and ellipse geometry.
//!
//! The fit minimizes the algebraic distance of a general conic subject to the
//! ellipse-specific constraint `4AC - B^2 = 1`, solved through the reduced 3x3
//! eigenproblem of the scatter matrix. Points are centred and scaled before the
//! fit so the scatter matrix stays well conditioned.

use std::f64::consts::PI;

use nalgebra::{Matrix3, Vector3};
use thiserror::Error;

use crate::types::{Ellipse, Point2};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FitError {
    #[error("underdetermined: need at least 5 points, got {0}")]
    TooFewPoints(usize),
    #[error("underdetermined: degenerate point configuration")]
    Degenerate,
    #[error("conic is not an ellipse")]
    NotAnEllipse,
    #[error("ellipse axes must be positive, got a={a}, b={b}")]
    InvalidAxes { a: f64, b: f64 },
}

/// General conic `A x^2 + B xy + C y^2 + D x + E y + F = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Conic(pub [f64; 6]);

impl Conic {
    pub fn eval(&self, p: Point2) -> f64 {
        let [a, b, c, d, e, f] = self.0;
        a * p.x * p.x + b * p.x * p.y + c * p.y * p.y + d * p.x + e * p.y + f
    }

    /// Geometric parameters, or `None` when the conic is not a real ellipse.
    pub fn to_ellipse(&self) -> Option<Ellipse> {
        let [mut a, mut b, mut c, mut d, mut e, mut f] = self.0;
        if a + c < 0.0 {
            (a, b, c, d, e, f) = (-a, -b, -c, -d, -e, -f);
        }
        let den = 4.0 * a * c - b * b;
        if !(den > 0.0) {
            return None;
        }
        let x0 = (b * e - 2.0 * c * d) / den;
        let y0 = (b * d - 2.0 * a * e) / den;
        let f0 = f + 0.5 * (d * x0 + e * y0);
        if !(f0 < 0.0) {
            return None;
        }
        let half_sum = 0.5 * (a + c);
        let r = 0.5 * (a - c).hypot(b);
        let lam_small = half_sum - r;
        let lam_large = half_sum + r;
        if !(lam_small > 0.0) {
            return None;
        }
        let major = (-f0 / lam_small).sqrt();
        let minor = (-f0 / lam_large).sqrt();
        // direction of the large eigenvalue is the minor axis
        let phi = 0.5 * b.atan2(a - c);
        let e = Ellipse::new(Point2::new(x0, y0), major, minor, phi + PI / 2.0);
        e.is_valid().then_some(e)
    }

    pub fn from_ellipse(el: &Ellipse) -> Conic {
        let (s, c) = el.theta.sin_cos();
        let (a2, b2) = (el.a * el.a, el.b * el.b);
        let aa = c * c / a2 + s * s / b2;
        let bb = 2.0 * s * c * (1.0 / a2 - 1.0 / b2);
        let cc = s * s / a2 + c * c / b2;
        let (x0, y0) = (el.center.x, el.center.y);
        let dd = -2.0 * aa * x0 - bb * y0;
        let ee = -bb * x0 - 2.0 * cc * y0;
        let ff = aa * x0 * x0 + bb * x0 * y0 + cc * y0 * y0 - 1.0;
        Conic([aa, bb, cc, dd, ee, ff])
    }
}

/// Similarity transform moving points to zero mean and unit RMS radius.
#[derive(Debug, Clone, Copy)]
struct Normalizer {
    mean: Point2,
    scale: f64,
}

impl Normalizer {
    fn new(points: &[Point2]) -> Option<Self> {
        let n = points.len() as f64;
        let mean = points
            .iter()
            .fold(Point2::default(), |acc, p| acc + *p)
            * (1.0 / n);
        let ms = points
            .iter()
            .map(|p| {
                let d = *p - mean;
                d.x * d.x + d.y * d.y
            })
            .sum::<f64>()
            / n;
        let rms = ms.sqrt();
        if !(rms > 0.0 && rms.is_finite()) {
            return None;
        }
        Some(Self {
            mean,
            scale: std::f64::consts::SQRT_2 / rms,
        })
    }

    fn apply(&self, p: Point2) -> Point2 {
        (p - self.mean) * self.scale
    }
}

/// Direct least-squares conic fit constrained to an ellipse.
pub fn fit_ellipse(points: &[Point2]) -> Result<Ellipse, FitError> {
    if points.len() < 5 {
        return Err(FitError::TooFewPoints(points.len()));
    }
    if points.iter().any(|p| !p.is_finite()) {
        return Err(FitError::Degenerate);
    }
    let norm = Normalizer::new(points).ok_or(FitError::Degenerate)?;

    let mut s1 = Matrix3::<f64>::zeros();
    let mut s2 = Matrix3::<f64>::zeros();
    let mut s3 = Matrix3::<f64>::zeros();
    for p in points {
        let q = norm.apply(*p);
        let d1 = Vector3::new(q.x * q.x, q.x * q.y, q.y * q.y);
        let d2 = Vector3::new(q.x, q.y, 1.0);
        s1 += d1 * d1.transpose();
        s2 += d1 * d2.transpose();
        s3 += d2 * d2.transpose();
    }

    // Collinear points make the linear scatter singular. After normalization
    // its eigenvalues are O(n), so a relative threshold is meaningful.
    let s3_eig = s3.symmetric_eigenvalues();
    let s3_max = s3_eig.max();
    if s3_eig.min() <= s3_max * 1e-12 {
        return Err(FitError::Degenerate);
    }
    let s3_inv = s3.try_inverse().ok_or(FitError::Degenerate)?;
    let t = -s3_inv * s2.transpose();
    let m = s1 + s2 * t;
    // Premultiply by the inverse of the 3x3 constraint block [[0,0,2],[0,-1,0],[2,0,0]].
    let reduced = Matrix3::new(
        m[(2, 0)] * 0.5,
        m[(2, 1)] * 0.5,
        m[(2, 2)] * 0.5,
        -m[(1, 0)],
        -m[(1, 1)],
        -m[(1, 2)],
        m[(0, 0)] * 0.5,
        m[(0, 1)] * 0.5,
        m[(0, 2)] * 0.5,
    );

    let eigenvalues = real_eigenvalues(&reduced);
    let mut best: Option<(f64, Vector3<f64>)> = None;
    for lambda in eigenvalues {
        let Some(v) = null_vector(&(reduced - Matrix3::identity() * lambda)) else {
            continue;
        };
        let constraint = 4.0 * v[0] * v[2] - v[1] * v[1];
        if constraint <= 0.0 {
            continue;
        }
        let cost = (v.transpose() * m * v)[0] / constraint;
        if best.as_ref().is_none_or(|(c, _)| cost < *c) {
            best = Some((cost, v));
        }
    }
    let (_, a1) = best.ok_or(FitError::NotAnEllipse)?;
    let a2 = t * a1;
    let conic = Conic([a1[0], a1[1], a1[2], a2[0], a2[1], a2[2]]);
    let local = conic.to_ellipse().ok_or(FitError::NotAnEllipse)?;

    let center = Point2::new(
        local.center.x / norm.scale + norm.mean.x,
        local.center.y / norm.scale + norm.mean.y,
    );
    let e = Ellipse::new(
        center,
        local.a / norm.scale,
        local.b / norm.scale,
        local.theta,
    );
    if e.is_valid() {
        Ok(e)
    } else {
        Err(FitError::NotAnEllipse)
    }
}

/// Real eigenvalues of a 3x3 matrix from its characteristic cubic.
fn real_eigenvalues(m: &Matrix3<f64>) -> Vec<f64> {
    if let Some(ev) = m.clone_owned().eigenvalues() {
        return ev.iter().copied().collect();
    }
    m.complex_eigenvalues()
        .iter()
        .filter(|z| z.im.abs() <= 1e-12 * (1.0 + z.re.abs()))
        .map(|z| z.re)
        .collect()
}

/// Unit vector spanning the null space of a (numerically) rank-2 3x3 matrix.
fn null_vector(m: &Matrix3<f64>) -> Option<Vector3<f64>> {
    let rows = [
        m.row(0).transpose(),
        m.row(1).transpose(),
        m.row(2).transpose(),
    ];
    let candidates = [
        rows[0].cross(&rows[1]),
        rows[0].cross(&rows[2]),
        rows[1].cross(&rows[2]),
    ];
    let best = candidates
        .iter()
        .max_by(|a, b| a.norm_squared().total_cmp(&b.norm_squared()))?;
    let n = best.norm();
    if n == 0.0 || !n.is_finite() {
        // rank <= 1: fall back to SVD
        let svd = m.svd(false, true);
        let vt = svd.v_t?;
        let (idx, _) = svd
            .singular_values
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))?;
        return Some(vt.row(idx).transpose());
    }
    Some(best / n)
}

/// Ellipse perimeter by Ramanujan's second approximation.
pub fn circumference(e: &Ellipse) -> Result<f64, FitError> {
    circumference_axes(e.a, e.b)
}

pub fn circumference_axes(a: f64, b: f64) -> Result<f64, FitError> {
    if !(a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite()) {
        return Err(FitError::InvalidAxes { a, b });
    }
    let (a, b) = if a >= b { (a, b) } else { (b, a) };
    let h = ((a - b) / (a + b)).powi(2);
    Ok(PI * (a + b) * (1.0 + 3.0 * h / (10.0 + (4.0 - 3.0 * h).sqrt())))
}

/// Closest point on the ellipse boundary to `p`.
pub fn closest_point(e: &Ellipse, p: Point2) -> Point2 {
    let q = e.to_local(p);
    let (a, b) = (e.a, e.b);
    let (px, py) = (q.x.abs(), q.y.abs());
    let (mut tx, mut ty) = (std::f64::consts::FRAC_1_SQRT_2, std::f64::consts::FRAC_1_SQRT_2);
    let ab = a * a - b * b;
    for _ in 0..4 {
        let x = a * tx;
        let y = b * ty;
        let ex = ab * tx.powi(3) / a;
        let ey = -ab * ty.powi(3) / b;
        let (rx, ry) = (x - ex, y - ey);
        let (qx, qy) = (px - ex, py - ey);
        let r = rx.hypot(ry);
        let qn = qx.hypot(qy);
        if qn < 1e-300 {
            break;
        }
        tx = ((qx * r / qn + ex) / a).clamp(0.0, 1.0);
        ty = ((qy * r / qn + ey) / b).clamp(0.0, 1.0);
        let t = tx.hypot(ty);
        tx /= t;
        ty /= t;
    }
    let lx = (a * tx).copysign(q.x);
    let ly = (b * ty).copysign(q.y);
    let (s, c) = e.theta.sin_cos();
    Point2::new(
        e.center.x + lx * c - ly * s,
        e.center.y + lx * s + ly * c,
    )
}

/// Euclidean distance from `p` to the ellipse boundary.
pub fn point_distance(e: &Ellipse, p: Point2) -> f64 {
    p.distance(closest_point(e, p))
}

/// Root-mean-square geometric distance of `points` to the ellipse.
pub fn rms_residual(e: &Ellipse, points: &[Point2]) -> f64 {
    if points.is_empty() {
        return 0.0;
    }
    let ss: f64 = points.iter().map(|p| point_distance(e, *p).powi(2)).sum();
    (ss / points.len() as f64).sqrt()
}

//! Plane-to-plane projective maps estimated by normalized DLT.

use nalgebra::{DMatrix, Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::Point2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HomographyError {
    #[error("homography needs at least 4 point pairs, got {0}")]
    TooFew(usize),
    #[error("degenerate point configuration")]
    Degenerate,
    #[error("singular homography matrix")]
    Singular,
    #[error("degenerate projection")]
    DegenerateProjection,
    #[error("non-finite input")]
    NonFinite,
}

/// Relative singular-value floor below which a configuration is degenerate.
const RANK_TOLERANCE: f64 = 1e-9;
/// Projections with `|w|` below this are treated as points at infinity.
const MIN_W: f64 = 1e-12;

/// A 3x3 projective map, scaled so the bottom-right entry is 1 when it is
/// nonzero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Homography {
    pub m: [[f64; 3]; 3],
    /// Reprojection RMS over the estimating correspondences; 0 for
    /// constructed maps.
    pub rms: f64,
}

impl Homography {
    pub fn identity() -> Self {
        Self {
            m: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            rms: 0.0,
        }
    }

    pub fn from_matrix(m: [[f64; 3]; 3]) -> Result<Self, HomographyError> {
        if m.iter().flatten().any(|v| !v.is_finite()) {
            return Err(HomographyError::NonFinite);
        }
        Self::from_na(&Matrix3::from_fn(|r, c| m[r][c]))
    }

    fn from_na(h: &Matrix3<f64>) -> Result<Self, HomographyError> {
        let scale = h.abs().max();
        if scale == 0.0 || (h / scale).determinant().abs() < 1e-14 {
            return Err(HomographyError::Singular);
        }
        let s = if h[(2, 2)].abs() > 1e-12 * scale { h[(2, 2)] } else { scale };
        let n = h / s;
        Ok(Self {
            m: [
                [n[(0, 0)], n[(0, 1)], n[(0, 2)]],
                [n[(1, 0)], n[(1, 1)], n[(1, 2)]],
                [n[(2, 0)], n[(2, 1)], n[(2, 2)]],
            ],
            rms: 0.0,
        })
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::from_fn(|r, c| self.m[r][c])
    }

    pub fn apply(&self, p: Point2) -> Result<Point2, HomographyError> {
        let m = &self.m;
        let x = m[0][0] * p.x + m[0][1] * p.y + m[0][2];
        let y = m[1][0] * p.x + m[1][1] * p.y + m[1][2];
        let w = m[2][0] * p.x + m[2][1] * p.y + m[2][2];
        if w.abs() < MIN_W || !w.is_finite() {
            return Err(HomographyError::DegenerateProjection);
        }
        Ok(Point2::new(x / w, y / w))
    }

    pub fn inverse(&self) -> Result<Self, HomographyError> {
        let inv = self.matrix().try_inverse().ok_or(HomographyError::Singular)?;
        Self::from_na(&inv)
    }

    /// `self` applied after `first`.
    pub fn compose(&self, first: &Homography) -> Result<Self, HomographyError> {
        Self::from_na(&(self.matrix() * first.matrix()))
    }
}

/// Similarity moving the centroid to the origin with mean distance sqrt(2).
fn normalizer(pts: &[Point2]) -> Option<Matrix3<f64>> {
    let n = pts.len() as f64;
    let cx = pts.iter().map(|p| p.x).sum::<f64>() / n;
    let cy = pts.iter().map(|p| p.y).sum::<f64>() / n;
    let mean = pts.iter().map(|p| (p.x - cx).hypot(p.y - cy)).sum::<f64>() / n;
    if !(mean.is_finite() && mean > 0.0) {
        return None;
    }
    let s = std::f64::consts::SQRT_2 / mean;
    Some(Matrix3::new(s, 0.0, -s * cx, 0.0, s, -s * cy, 0.0, 0.0, 1.0))
}

fn transform(t: &Matrix3<f64>, p: Point2) -> Point2 {
    let v = t * Vector3::new(p.x, p.y, 1.0);
    Point2::new(v.x / v.z, v.y / v.z)
}

fn has_collinear_triple(pts: &[Point2]) -> bool {
    for i in 0..pts.len() {
        for j in i + 1..pts.len() {
            for k in j + 1..pts.len() {
                let (a, b, c) = (pts[i], pts[j], pts[k]);
                let cross = (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x);
                if cross.abs() < 1e-9 {
                    return true;
                }
            }
        }
    }
    false
}

/// Least-squares homography taking each `from` point to its `to` partner.
pub fn estimate_homography(pairs: &[(Point2, Point2)]) -> Result<Homography, HomographyError> {
    if pairs.len() < 4 {
        return Err(HomographyError::TooFew(pairs.len()));
    }
    if pairs.iter().any(|(a, b)| !a.is_finite() || !b.is_finite()) {
        return Err(HomographyError::NonFinite);
    }
    let from: Vec<Point2> = pairs.iter().map(|p| p.0).collect();
    let to: Vec<Point2> = pairs.iter().map(|p| p.1).collect();
    let tf = normalizer(&from).ok_or(HomographyError::Degenerate)?;
    let tt = normalizer(&to).ok_or(HomographyError::Degenerate)?;
    let nf: Vec<Point2> = from.iter().map(|p| transform(&tf, *p)).collect();
    let nt: Vec<Point2> = to.iter().map(|p| transform(&tt, *p)).collect();
    if pairs.len() == 4 && (has_collinear_triple(&nf) || has_collinear_triple(&nt)) {
        return Err(HomographyError::Degenerate);
    }

    // padded to at least 9 rows so the SVD exposes the full right null space
    let rows = (2 * pairs.len()).max(9);
    let mut a = DMatrix::<f64>::zeros(rows, 9);
    for (i, (p, q)) in nf.iter().zip(&nt).enumerate() {
        let r = 2 * i;
        a.row_mut(r)
            .copy_from_slice(&[-p.x, -p.y, -1.0, 0.0, 0.0, 0.0, q.x * p.x, q.x * p.y, q.x]);
        a.row_mut(r + 1)
            .copy_from_slice(&[0.0, 0.0, 0.0, -p.x, -p.y, -1.0, q.y * p.x, q.y * p.y, q.y]);
    }
    let svd = a.svd(false, true);
    let v_t = svd.v_t.ok_or(HomographyError::Degenerate)?;
    let sv = &svd.singular_values;
    let mut order: Vec<usize> = (0..sv.len()).collect();
    order.sort_by(|&i, &j| sv[j].total_cmp(&sv[i]));
    // the solution must be the only null direction
    if sv[order[7]] <= RANK_TOLERANCE * sv[order[0]] {
        return Err(HomographyError::Degenerate);
    }
    let h = v_t.row(order[8]);
    let hn = Matrix3::new(h[0], h[1], h[2], h[3], h[4], h[5], h[6], h[7], h[8]);
    let tt_inv = tt.try_inverse().ok_or(HomographyError::Degenerate)?;
    let mut out = Homography::from_na(&(tt_inv * hn * tf)).map_err(|_| HomographyError::Degenerate)?;

    let mut ss = 0.0;
    for (p, q) in pairs {
        let r = out.apply(*p)?;
        ss += r.distance(*q).powi(2);
    }
    out.rms = (ss / pairs.len() as f64).sqrt();
    Ok(out)
}

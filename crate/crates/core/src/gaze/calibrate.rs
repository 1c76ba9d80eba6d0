//! Polynomial transfer function from pupil to scene coordinates.
//!
//! Each scene coordinate is a bivariate polynomial of total degree `d` in the
//! normalized pupil position. Monomials are ordered by total degree, then by
//! descending power of x: `1, x, y, x^2, xy, y^2, x^3, ...`.

use std::io::{self, BufRead, Write};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::{GazeDatum, Point2, PupilDatum};

/// A simultaneous pupil position and known target position.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationPair {
    pub pupil: Point2,
    pub target: Point2,
    pub timestamp: f64,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CalibrationError {
    #[error("polynomial degree must be at least 1, got {0}")]
    Degree(usize),
    #[error("underdetermined: degree {degree} needs at least {required} pairs, got {got}")]
    Underdetermined {
        degree: usize,
        required: usize,
        got: usize,
    },
    #[error("degenerate calibration geometry (condition number {0:.3e})")]
    Degenerate(f64),
    #[error("non-finite coordinate in calibration pair {0}")]
    NonFinite(usize),
    #[error("model has {got} coefficients per axis, degree {degree} needs {expected}")]
    Shape {
        degree: usize,
        expected: usize,
        got: usize,
    },
}

/// Singular values below this fraction of the largest one mark the design
/// matrix as rank deficient.
const RANK_TOLERANCE: f64 = 1e-10;

/// Number of monomials of total degree at most `degree`.
pub fn monomial_count(degree: usize) -> usize {
    (degree + 1) * (degree + 2) / 2
}

/// Exponent pairs `(i, j)` of `x^i y^j` in coefficient order.
pub fn monomial_exponents(degree: usize) -> Vec<(u32, u32)> {
    let mut out = Vec::with_capacity(monomial_count(degree));
    for k in 0..=degree as u32 {
        for j in 0..=k {
            out.push((k - j, j));
        }
    }
    out
}

/// Monomial values at `p` in coefficient order.
pub fn monomials(p: Point2, degree: usize) -> Vec<f64> {
    monomial_exponents(degree)
        .into_iter()
        .map(|(i, j)| p.x.powi(i as i32) * p.y.powi(j as i32))
        .collect()
}

/// Fitted pupil-to-scene mapping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationModel {
    pub degree: usize,
    pub coeffs_x: Vec<f64>,
    pub coeffs_y: Vec<f64>,
    /// RMS Euclidean error over the calibration pairs, normalized scene units.
    pub rms_residual: f64,
}

impl CalibrationModel {
    /// Builds a model from explicit coefficients.
    pub fn from_coeffs(degree: usize, coeffs_x: Vec<f64>, coeffs_y: Vec<f64>) -> Result<Self, CalibrationError> {
        let m = Self {
            degree,
            coeffs_x,
            coeffs_y,
            rms_residual: 0.0,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn identity() -> Self {
        Self {
            degree: 1,
            coeffs_x: vec![0.0, 1.0, 0.0],
            coeffs_y: vec![0.0, 0.0, 1.0],
            rms_residual: 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), CalibrationError> {
        if self.degree == 0 {
            return Err(CalibrationError::Degree(0));
        }
        let expected = monomial_count(self.degree);
        for got in [self.coeffs_x.len(), self.coeffs_y.len()] {
            if got != expected {
                return Err(CalibrationError::Shape {
                    degree: self.degree,
                    expected,
                    got,
                });
            }
        }
        Ok(())
    }

    /// Evaluates both polynomials at a normalized pupil position.
    pub fn apply(&self, p: Point2) -> Point2 {
        let m = monomials(p, self.degree);
        let dot = |c: &[f64]| c.iter().zip(&m).map(|(a, b)| a * b).sum::<f64>();
        Point2::new(dot(&self.coeffs_x), dot(&self.coeffs_y))
    }

    /// Lipschitz constant of the mapping over inputs with `|x|, |y| <= 1`
    /// (which includes the normalized frame `[0,1]^2`).
    ///
    /// Each partial derivative of a monomial `x^i y^j` is bounded by its
    /// exponent there, so `|grad f| <= sum |c| (i + j)` for each output, and
    /// the Jacobian norm is at most the Euclidean norm of the two bounds.
    pub fn lipschitz_bound(&self) -> f64 {
        let exps = monomial_exponents(self.degree);
        let grad = |c: &[f64]| {
            c.iter()
                .zip(&exps)
                .map(|(v, (i, j))| v.abs() * (i + j) as f64)
                .sum::<f64>()
        };
        grad(&self.coeffs_x).hypot(grad(&self.coeffs_y))
    }
}

/// Least-squares fit of both scene coordinates, solved by SVD.
pub fn calibrate(pairs: &[CalibrationPair], degree: usize) -> Result<CalibrationModel, CalibrationError> {
    if degree == 0 {
        return Err(CalibrationError::Degree(0));
    }
    let required = monomial_count(degree);
    if pairs.len() < required {
        return Err(CalibrationError::Underdetermined {
            degree,
            required,
            got: pairs.len(),
        });
    }
    for (i, p) in pairs.iter().enumerate() {
        if !(p.pupil.is_finite() && p.target.is_finite()) {
            return Err(CalibrationError::NonFinite(i));
        }
    }
    let n = pairs.len();
    let a = DMatrix::from_fn(n, required, |r, c| monomials(pairs[r].pupil, degree)[c]);
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if smax <= 0.0 || smin <= RANK_TOLERANCE * smax {
        let cond = if smin > 0.0 { smax / smin } else { f64::INFINITY };
        return Err(CalibrationError::Degenerate(cond));
    }
    let bx = DVector::from_iterator(n, pairs.iter().map(|p| p.target.x));
    let by = DVector::from_iterator(n, pairs.iter().map(|p| p.target.y));
    let cx = svd.solve(&bx, 0.0).expect("u and v were computed");
    let cy = svd.solve(&by, 0.0).expect("u and v were computed");
    let mut model = CalibrationModel {
        degree,
        coeffs_x: cx.iter().copied().collect(),
        coeffs_y: cy.iter().copied().collect(),
        rms_residual: 0.0,
    };
    let sq: f64 = pairs
        .iter()
        .map(|p| {
            let q = model.apply(p.pupil);
            (q.x - p.target.x).powi(2) + (q.y - p.target.y).powi(2)
        })
        .sum();
    model.rms_residual = (sq / n as f64).sqrt();
    Ok(model)
}

/// Maps a pupil datum into scene coordinates. Timestamp and confidence pass
/// through via the embedded base datum.
pub fn map_gaze(p: &PupilDatum, model: &CalibrationModel) -> GazeDatum {
    GazeDatum::new(model.apply(p.norm_pos), *p)
}

pub const PAIRS_HEADER: &str = "pupil_x,pupil_y,target_x,target_y,timestamp";

pub fn write_pairs_csv<W: Write>(mut out: W, pairs: &[CalibrationPair]) -> io::Result<()> {
    writeln!(out, "{PAIRS_HEADER}")?;
    for p in pairs {
        writeln!(
            out,
            "{},{},{},{},{}",
            p.pupil.x, p.pupil.y, p.target.x, p.target.y, p.timestamp
        )?;
    }
    Ok(())
}

pub fn read_pairs_csv<R: BufRead>(input: R) -> io::Result<Vec<CalibrationPair>> {
    let bad = |line: usize, msg: String| io::Error::new(io::ErrorKind::InvalidData, format!("line {line}: {msg}"));
    let mut lines = input.lines();
    let header = lines.next().transpose()?.unwrap_or_default();
    if header.trim_end() != PAIRS_HEADER {
        return Err(bad(1, format!("expected header `{PAIRS_HEADER}`")));
    }
    let mut pairs = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let v: Vec<f64> = line
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| bad(i + 2, e.to_string()))?;
        if v.len() != 5 || v.iter().any(|x| !x.is_finite()) {
            return Err(bad(i + 2, "expected 5 finite numbers".into()));
        }
        pairs.push(CalibrationPair {
            pupil: Point2::new(v[0], v[1]),
            target: Point2::new(v[2], v[3]),
            timestamp: v[4],
        });
    }
    Ok(pairs)
}

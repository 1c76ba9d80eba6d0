//! Shared domain types and coordinate conventions.
//!
//! Pixel coordinates have their origin at the top-left corner of the image with
//! `y` growing downwards; pixel `(i, j)` is centred on the continuous point
//! `(i, j)`. Normalized coordinates are plain division by the frame dimensions,
//! so `(0, 0)` is the top-left corner and `(1, 1)` the bottom-right one.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A 2D point or vector in pixel or normalized units.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(self, other: Point2) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl std::ops::Add for Point2 {
    type Output = Point2;
    fn add(self, rhs: Point2) -> Point2 {
        Point2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl std::ops::Sub for Point2 {
    type Output = Point2;
    fn sub(self, rhs: Point2) -> Point2 {
        Point2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl std::ops::Mul<f64> for Point2 {
    type Output = Point2;
    fn mul(self, rhs: f64) -> Point2 {
        Point2::new(self.x * rhs, self.y * rhs)
    }
}

impl From<(f64, f64)> for Point2 {
    fn from((x, y): (f64, f64)) -> Self {
        Point2::new(x, y)
    }
}

/// Which camera a frame or datum comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StreamId {
    Eye,
    Scene,
}

impl StreamId {
    pub fn as_str(self) -> &'static str {
        match self {
            StreamId::Eye => "eye",
            StreamId::Scene => "scene",
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FrameError {
    #[error("frame dimensions must be positive, got {width}x{height}")]
    EmptyDimensions { width: usize, height: usize },
    #[error("pixel buffer holds {got} bytes, expected {expected} for {width}x{height}")]
    BufferSize {
        width: usize,
        height: usize,
        expected: usize,
        got: usize,
    },
    #[error("frame too small: {width}x{height} cannot hold a {needed}px kernel")]
    TooSmall {
        width: usize,
        height: usize,
        needed: usize,
    },
}

/// An 8-bit grayscale image with its capture timestamp.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayFrame {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
    pub timestamp: f64,
    pub stream: StreamId,
}

impl GrayFrame {
    pub fn new(
        width: usize,
        height: usize,
        pixels: Vec<u8>,
        timestamp: f64,
        stream: StreamId,
    ) -> Result<Self, FrameError> {
        if width == 0 || height == 0 {
            return Err(FrameError::EmptyDimensions { width, height });
        }
        if pixels.len() != width * height {
            return Err(FrameError::BufferSize {
                width,
                height,
                expected: width * height,
                got: pixels.len(),
            });
        }
        Ok(Self {
            width,
            height,
            pixels,
            timestamp,
            stream,
        })
    }

    /// A frame filled with a single intensity.
    pub fn filled(width: usize, height: usize, value: u8) -> Result<Self, FrameError> {
        Self::new(width, height, vec![value; width * height], 0.0, StreamId::Eye)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn pixels_mut(&mut self) -> &mut [u8] {
        &mut self.pixels
    }

    pub fn into_pixels(self) -> Vec<u8> {
        self.pixels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: u8) {
        self.pixels[y * self.width + x] = v;
    }

    /// Copies the rectangle `rect` into a new frame (same timestamp and stream).
    pub fn crop(&self, rect: Rect) -> GrayFrame {
        let rect = rect.clamp_to(self.width, self.height);
        let mut out = Vec::with_capacity(rect.width * rect.height);
        for y in rect.y..rect.y + rect.height {
            let row = y * self.width;
            out.extend_from_slice(&self.pixels[row + rect.x..row + rect.x + rect.width]);
        }
        GrayFrame {
            width: rect.width,
            height: rect.height,
            pixels: out,
            timestamp: self.timestamp,
            stream: self.stream,
        }
    }
}

/// Axis-aligned integer rectangle in pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rect {
    pub x: usize,
    pub y: usize,
    pub width: usize,
    pub height: usize,
}

impl Rect {
    pub fn new(x: usize, y: usize, width: usize, height: usize) -> Self {
        Self {
            x,
            y,
            width,
            height,
        }
    }

    pub fn full(width: usize, height: usize) -> Self {
        Self::new(0, 0, width, height)
    }

    /// Intersection with the `width x height` image; may be empty.
    pub fn clamp_to(self, width: usize, height: usize) -> Rect {
        let x = self.x.min(width);
        let y = self.y.min(height);
        let w = self.width.min(width - x);
        let h = self.height.min(height - y);
        Rect::new(x, y, w, h)
    }

    pub fn is_empty(&self) -> bool {
        self.width == 0 || self.height == 0
    }

    pub fn contains(&self, x: usize, y: usize) -> bool {
        x >= self.x && y >= self.y && x < self.x + self.width && y < self.y + self.height
    }
}

/// Pupil contour model in pixel space.
///
/// `a` is the semi-major axis, `b` the semi-minor axis and `theta` the angle of
/// the major axis measured from `+x` towards `+y`, in `[0, π)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ellipse {
    pub center: Point2,
    pub a: f64,
    pub b: f64,
    pub theta: f64,
}

impl Ellipse {
    /// Builds an ellipse from arbitrary axis lengths and angle, swapping the
    /// axes when needed so that `a >= b` and wrapping `theta` into `[0, π)`.
    pub fn new(center: Point2, a: f64, b: f64, theta: f64) -> Self {
        let (a, b, theta) = if b > a {
            (b, a, theta + PI / 2.0)
        } else {
            (a, b, theta)
        };
        Self {
            center,
            a,
            b,
            theta: wrap_half_turn(theta),
        }
    }

    pub fn circle(center: Point2, r: f64) -> Self {
        Self::new(center, r, r, 0.0)
    }

    pub fn is_valid(&self) -> bool {
        self.center.is_finite()
            && self.a.is_finite()
            && self.b.is_finite()
            && self.b > 0.0
            && self.a >= self.b
    }

    /// Point at eccentric anomaly `t`.
    pub fn point_at(&self, t: f64) -> Point2 {
        let (st, ct) = self.theta.sin_cos();
        let (s, c) = t.sin_cos();
        let u = self.a * c;
        let v = self.b * s;
        Point2::new(self.center.x + u * ct - v * st, self.center.y + u * st + v * ct)
    }

    /// `n` points evenly spaced in eccentric anomaly.
    pub fn sample(&self, n: usize) -> Vec<Point2> {
        (0..n)
            .map(|i| self.point_at(2.0 * PI * i as f64 / n as f64))
            .collect()
    }

    /// Coordinates of `p` in the ellipse frame (major axis along `+u`).
    pub fn to_local(&self, p: Point2) -> Point2 {
        let (st, ct) = self.theta.sin_cos();
        let d = p - self.center;
        Point2::new(d.x * ct + d.y * st, -d.x * st + d.y * ct)
    }

    /// `true` when `p` lies inside or on the ellipse.
    pub fn contains(&self, p: Point2) -> bool {
        let q = self.to_local(p);
        (q.x / self.a).powi(2) + (q.y / self.b).powi(2) <= 1.0
    }

    pub fn translated(&self, dx: f64, dy: f64) -> Ellipse {
        Ellipse {
            center: Point2::new(self.center.x + dx, self.center.y + dy),
            ..*self
        }
    }

    pub fn area(&self) -> f64 {
        PI * self.a * self.b
    }
}

pub(crate) fn wrap_half_turn(theta: f64) -> f64 {
    let t = theta.rem_euclid(PI);
    // rem_euclid can return PI itself through rounding
    if t >= PI {
        0.0
    } else {
        t
    }
}

/// Result of running the pupil detector on one eye frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PupilDatum {
    pub ellipse: Ellipse,
    pub norm_pos: Point2,
    pub confidence: f64,
    pub timestamp: f64,
}

/// A pupil datum mapped into normalized scene coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GazeDatum {
    pub norm_pos: Point2,
    pub base: PupilDatum,
    pub timestamp: f64,
}

impl GazeDatum {
    pub fn new(norm_pos: Point2, base: PupilDatum) -> Self {
        Self {
            norm_pos,
            base,
            timestamp: base.timestamp,
        }
    }

    pub fn confidence(&self) -> f64 {
        self.base.confidence
    }

    /// `true` when the mapped point lies inside the scene frame.
    pub fn in_frame(&self) -> bool {
        (0.0..=1.0).contains(&self.norm_pos.x) && (0.0..=1.0).contains(&self.norm_pos.y)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IntrinsicsError {
    #[error("field of view must be positive and finite, got {0}")]
    FieldOfView(f64),
    #[error("image diagonal must be positive, got {width}x{height}")]
    Dimensions { width: f64, height: f64 },
}

/// Camera resolution and diagonal field of view.
///
/// Angular conversions use a linear pixels-per-degree ratio derived from the
/// image diagonal, not a pinhole arctangent model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "IntrinsicsSpec", into = "IntrinsicsSpec")]
pub struct CameraIntrinsics {
    width: f64,
    height: f64,
    fov_diagonal: f64,
    px_per_degree: f64,
}

#[derive(Serialize, Deserialize)]
struct IntrinsicsSpec {
    width: f64,
    height: f64,
    fov_diagonal: f64,
}

impl TryFrom<IntrinsicsSpec> for CameraIntrinsics {
    type Error = IntrinsicsError;
    fn try_from(s: IntrinsicsSpec) -> Result<Self, Self::Error> {
        CameraIntrinsics::new(s.width, s.height, s.fov_diagonal)
    }
}

impl From<CameraIntrinsics> for IntrinsicsSpec {
    fn from(c: CameraIntrinsics) -> Self {
        IntrinsicsSpec {
            width: c.width,
            height: c.height,
            fov_diagonal: c.fov_diagonal,
        }
    }
}

impl CameraIntrinsics {
    pub fn new(width: f64, height: f64, fov_diagonal: f64) -> Result<Self, IntrinsicsError> {
        let px_per_degree = px_per_degree(width, height, fov_diagonal)?;
        Ok(Self {
            width,
            height,
            fov_diagonal,
            px_per_degree,
        })
    }

    /// 1280x720 scene camera with a 90 degree diagonal field of view.
    pub fn default_scene() -> Self {
        Self::new(1280.0, 720.0, 90.0).expect("valid constants")
    }

    /// 640x480 eye camera.
    pub fn default_eye() -> Self {
        Self::new(640.0, 480.0, 90.0).expect("valid constants")
    }

    pub fn width(&self) -> f64 {
        self.width
    }

    pub fn height(&self) -> f64 {
        self.height
    }

    pub fn fov_diagonal(&self) -> f64 {
        self.fov_diagonal
    }

    pub fn px_per_degree(&self) -> f64 {
        self.px_per_degree
    }

    pub fn pixel_from_norm(&self, p: Point2) -> Point2 {
        Point2::new(p.x * self.width, p.y * self.height)
    }

    pub fn norm_from_pixel(&self, p: Point2) -> Point2 {
        Point2::new(p.x / self.width, p.y / self.height)
    }
}

/// Pixels per degree of visual angle: image diagonal over diagonal FOV.
pub fn px_per_degree(width: f64, height: f64, fov_diagonal: f64) -> Result<f64, IntrinsicsError> {
    if !(fov_diagonal.is_finite() && fov_diagonal > 0.0) {
        return Err(IntrinsicsError::FieldOfView(fov_diagonal));
    }
    let diag = width.hypot(height);
    if !(diag.is_finite() && diag > 0.0) || width < 0.0 || height < 0.0 {
        return Err(IntrinsicsError::Dimensions { width, height });
    }
    Ok(diag / fov_diagonal)
}

/// Normalized position of pixel `p` in a `width x height` frame.
///
/// Points outside the frame map outside `[0, 1]`; callers flag those.
pub fn norm_from_pixel(p: Point2, width: usize, height: usize) -> Point2 {
    Point2::new(p.x / width as f64, p.y / height as f64)
}

pub fn pixel_from_norm(p: Point2, width: usize, height: usize) -> Point2 {
    Point2::new(p.x * width as f64, p.y * height as f64)
}

/// Angular distance in degrees between two scene pixel positions.
pub fn angular_distance(p: Point2, q: Point2, intr: &CameraIntrinsics) -> f64 {
    p.distance(q) / intr.px_per_degree()
}

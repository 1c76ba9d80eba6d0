//! Eye image renderer with exact ground truth.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::types::{Ellipse, GrayFrame, Point2, StreamId};

/// Intensities of the rendered eye regions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Palette {
    pub pupil: f64,
    /// Iris intensity at its centre; it brightens by `iris_ramp` towards the rim.
    pub iris: f64,
    pub iris_ramp: f64,
    pub sclera: f64,
    pub eyelid: f64,
}

impl Default for Palette {
    fn default() -> Self {
        Self {
            pupil: 20.0,
            iris: 92.0,
            iris_ramp: 16.0,
            sclera: 200.0,
            eyelid: 165.0,
        }
    }
}

/// Pupil position over time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum PupilTrajectory {
    Fixed(Ellipse),
    /// Lissajous motion of a pupil whose shape is fixed.
    Orbit {
        center: Point2,
        amplitude: (f64, f64),
        period: (f64, f64),
        a: f64,
        b: f64,
        theta: f64,
    },
}

impl PupilTrajectory {
    pub fn at(&self, t: f64) -> Ellipse {
        match self {
            PupilTrajectory::Fixed(e) => *e,
            PupilTrajectory::Orbit {
                center,
                amplitude,
                period,
                a,
                b,
                theta,
            } => {
                let tau = std::f64::consts::TAU;
                let c = Point2::new(
                    center.x + amplitude.0 * (tau * t / period.0).sin(),
                    center.y + amplitude.1 * (tau * t / period.1).sin(),
                );
                Ellipse::new(c, *a, *b, *theta)
            }
        }
    }
}

/// Everything needed to render an eye frame at a given time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EyeRig {
    pub width: usize,
    pub height: usize,
    pub palette: Palette,
    pub trajectory: PupilTrajectory,
    /// Iris radius in pixels; foreshortened with the same axis ratio as the pupil.
    pub iris_radius: f64,
    /// Standard deviation of additive Gaussian pixel noise.
    pub noise_sd: f64,
    pub glint_count: usize,
    pub glint_radius: f64,
    /// Fraction of the pupil outline hidden by the upper eyelid, in `[0, 1)`.
    pub occlusion: f64,
    pub seed: u64,
}

impl Default for EyeRig {
    fn default() -> Self {
        Self {
            width: 640,
            height: 480,
            palette: Palette::default(),
            trajectory: PupilTrajectory::Fixed(Ellipse::circle(Point2::new(320.0, 240.0), 40.0)),
            iris_radius: 125.0,
            noise_sd: 0.0,
            glint_count: 0,
            glint_radius: 4.0,
            occlusion: 0.0,
            seed: 0,
        }
    }
}

/// A rendered frame and its truth record.
#[derive(Debug, Clone)]
pub struct RenderedEye {
    pub frame: GrayFrame,
    pub truth: Ellipse,
    /// Eyelid edge height at the pupil centre column; `None` when there is no lid.
    pub lid_y: Option<f64>,
    pub glints: Vec<Point2>,
}

/// Curvature of the eyelid edge (pixels of droop per pixel squared).
const LID_CURVATURE: f64 = 0.0015;

struct Scene<'a> {
    rig: &'a EyeRig,
    pupil: Ellipse,
    iris: Ellipse,
    lid: Option<(f64, f64)>,
}

impl Scene<'_> {
    /// Noise-free intensity at a continuous position.
    fn shade(&self, p: Point2) -> f64 {
        let pal = &self.rig.palette;
        if let Some((cx, y0)) = self.lid {
            let dx = p.x - cx;
            if p.y < y0 - LID_CURVATURE * dx * dx {
                return pal.eyelid;
            }
        }
        if self.pupil.contains(p) {
            return pal.pupil;
        }
        let q = self.iris.to_local(p);
        let r = (q.x / self.iris.a).hypot(q.y / self.iris.b);
        if r <= 1.0 {
            pal.iris + pal.iris_ramp * r
        } else {
            pal.sclera
        }
    }
}

/// Pupil outline fraction above the lid edge `y0 - k (x - cx)^2`.
fn hidden_fraction(pupil: &Ellipse, cx: f64, y0: f64) -> f64 {
    let n = 720;
    // the hidden fraction of arc length, not of parameter, is what confidence sees
    let pts = pupil.sample(n);
    // positive above the lid edge
    let above = |p: Point2| {
        let dx = p.x - cx;
        y0 - LID_CURVATURE * dx * dx - p.y
    };
    let mut hidden = 0.0;
    let mut total = 0.0;
    for i in 0..n {
        let (p, q) = (pts[i], pts[(i + 1) % n]);
        let len = p.distance(q);
        let (sp, sq) = (above(p), above(q));
        // split segments that cross the lid so the fraction is continuous in y0
        hidden += len
            * match (sp > 0.0, sq > 0.0) {
                (true, true) => 1.0,
                (false, false) => 0.0,
                (true, false) => sp / (sp - sq),
                (false, true) => sq / (sq - sp),
            };
        total += len;
    }
    hidden / total
}

/// Lid height at the pupil centre column that hides `fraction` of the outline.
pub fn lid_for_occlusion(pupil: &Ellipse, fraction: f64) -> f64 {
    let top = pupil.center.y - pupil.a - 1.0;
    let bottom = pupil.center.y + pupil.a + 1.0;
    let (mut lo, mut hi) = (top, bottom);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if hidden_fraction(pupil, pupil.center.x, mid) < fraction {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn frame_rng(seed: u64, t: f64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(t.to_bits());
    rng
}

/// Renders the eye at time `t`. Pure in `(rig, t)`.
pub fn render_eye_frame(rig: &EyeRig, t: f64) -> RenderedEye {
    render_eye_with(rig, &rig.trajectory.at(t), t)
}

/// Renders `pupil` with the rig's appearance settings.
pub fn render_eye_with(rig: &EyeRig, pupil: &Ellipse, t: f64) -> RenderedEye {
    let (w, h) = (rig.width, rig.height);
    let mut rng = frame_rng(rig.seed, t);
    let iris_a = rig.iris_radius.max(pupil.a * 1.2);
    let iris = Ellipse::new(pupil.center, iris_a, iris_a * pupil.b / pupil.a, pupil.theta);
    let lid = (rig.occlusion > 0.0)
        .then(|| (pupil.center.x, lid_for_occlusion(pupil, rig.occlusion.min(0.99))));
    let scene = Scene {
        rig,
        pupil: *pupil,
        iris,
        lid,
    };

    // Shade the pixel-corner lattice once; pixels whose corners agree need no supersampling.
    let cw = w + 1;
    let mut corners = vec![0f64; cw * (h + 1)];
    for y in 0..=h {
        for x in 0..cw {
            corners[y * cw + x] = scene.shade(Point2::new(x as f64 - 0.5, y as f64 - 0.5));
        }
    }
    let noise = (rig.noise_sd > 0.0).then(|| Normal::new(0.0, rig.noise_sd).expect("finite sd"));
    let mut px = vec![0u8; w * h];
    for y in 0..h {
        for x in 0..w {
            let c = [
                corners[y * cw + x],
                corners[y * cw + x + 1],
                corners[(y + 1) * cw + x],
                corners[(y + 1) * cw + x + 1],
            ];
            let lo = c.iter().copied().fold(f64::MAX, f64::min);
            let hi = c.iter().copied().fold(f64::MIN, f64::max);
            let mut v = if hi - lo > 1.0 {
                let mut acc = 0.0;
                for sy in 0..4 {
                    for sx in 0..4 {
                        acc += scene.shade(Point2::new(
                            x as f64 - 0.375 + 0.25 * sx as f64,
                            y as f64 - 0.375 + 0.25 * sy as f64,
                        ));
                    }
                }
                acc / 16.0
            } else {
                0.25 * c.iter().sum::<f64>()
            };
            if let Some(n) = &noise {
                v += n.sample(&mut rng);
            }
            px[y * w + x] = v.round().clamp(0.0, 255.0) as u8;
        }
    }

    // Glints go on after noise so they stay saturated.
    let mut glints = Vec::with_capacity(rig.glint_count);
    for _ in 0..rig.glint_count {
        let ang = rng.random_range(0.0..std::f64::consts::TAU);
        let rad = rng.random_range(0.2..1.0);
        let local = Point2::new(rad * pupil.a * ang.cos(), rad * pupil.b * ang.sin());
        let (s, c) = pupil.theta.sin_cos();
        let g = Point2::new(
            pupil.center.x + c * local.x - s * local.y,
            pupil.center.y + s * local.x + c * local.y,
        );
        glints.push(g);
        let r = rig.glint_radius;
        let x0 = (g.x - r - 1.0).floor().max(0.0) as usize;
        let y0 = (g.y - r - 1.0).floor().max(0.0) as usize;
        let x1 = ((g.x + r + 1.0).ceil() as usize).min(w - 1);
        let y1 = ((g.y + r + 1.0).ceil() as usize).min(h - 1);
        for y in y0..=y1 {
            for x in x0..=x1 {
                if (x as f64 - g.x).hypot(y as f64 - g.y) <= r {
                    px[y * w + x] = 255;
                }
            }
        }
    }

    let frame = GrayFrame::new(w, h, px, t, StreamId::Eye).expect("rig dims are positive");
    RenderedEye {
        frame,
        truth: *pupil,
        lid_y: lid.map(|(_, y)| y),
        glints,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn render_is_deterministic() {
        let rig = EyeRig {
            noise_sd: 5.0,
            glint_count: 2,
            occlusion: 0.3,
            seed: 11,
            ..Default::default()
        };
        let a = render_eye_frame(&rig, 0.25);
        let b = render_eye_frame(&rig, 0.25);
        assert_eq!(a.frame, b.frame);
        let c = render_eye_frame(&rig, 0.5);
        assert_ne!(a.frame.pixels(), c.frame.pixels());
    }

    #[test]
    fn palette_is_respected() {
        let rig = EyeRig::default();
        let r = render_eye_frame(&rig, 0.0);
        assert_eq!(r.frame.get(320, 240), 20);
        assert_eq!(r.frame.get(5, 5), 200);
        let iris = r.frame.get(320 + 70, 240);
        assert!((92..=110).contains(&iris), "{iris}");
    }

    #[test]
    fn lid_hides_requested_fraction() {
        let e = Ellipse::new(Point2::new(300.0, 200.0), 40.0, 30.0, 0.4);
        for f in [0.1, 0.3, 0.5] {
            let y = lid_for_occlusion(&e, f);
            let got = hidden_fraction(&e, e.center.x, y);
            assert!((got - f).abs() < 1e-3, "{f}: {got}");
        }
    }

    #[test]
    fn glints_are_saturated() {
        let rig = EyeRig {
            glint_count: 1,
            noise_sd: 3.0,
            ..Default::default()
        };
        let r = render_eye_frame(&rig, 0.0);
        let g = r.glints[0];
        assert_eq!(r.frame.get(g.x.round() as usize, g.y.round() as usize), 255);
    }
}

//! Scene camera renderer: calibration markers and fiducial-tagged surfaces.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::gaze::marker::MarkerKind;
use crate::surface::fiducial::{marker_cells, SurfaceDefinition, GRID};
use crate::surface::homography::Homography;
use crate::types::{GrayFrame, Point2, StreamId};

pub const INK: f64 = 25.0;
pub const PAPER: f64 = 235.0;

/// A concentric calibration marker in scene pixels.
///
/// Bands from the rim inward: dark to 0.75 R, light to 0.5 R, dark to
/// 0.25 R, then a centre disk that is dark for collect and light for stop.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConcentricMarker {
    pub center: Point2,
    pub radius: f64,
    pub kind: MarkerKind,
}

impl ConcentricMarker {
    fn shade(&self, p: Point2) -> Option<f64> {
        let r = p.distance(self.center) / self.radius;
        if r > 1.0 {
            return None;
        }
        let dark = if r > 0.75 {
            true
        } else if r > 0.5 {
            false
        } else if r > 0.25 {
            true
        } else {
            self.kind == MarkerKind::Collect
        };
        Some(if dark { INK } else { PAPER })
    }
}

/// One fiducial on a surface: its id and an axis-aligned square in
/// surface-normalized coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FiducialPlacement {
    pub id: u8,
    pub origin: Point2,
    pub size: f64,
}

impl FiducialPlacement {
    /// Corners clockwise from the top-left.
    pub fn corners(&self) -> [Point2; 4] {
        let (o, s) = (self.origin, self.size);
        [
            o,
            Point2::new(o.x + s, o.y),
            Point2::new(o.x + s, o.y + s),
            Point2::new(o.x, o.y + s),
        ]
    }
}

/// A light rectangular surface with fiducials, posed in the scene by a
/// surface-normalized to scene-pixel homography.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlacedSurface {
    pub name: String,
    pub fiducials: Vec<FiducialPlacement>,
    pub to_scene: Homography,
}

impl PlacedSurface {
    /// Four fiducials of size `size` inset by `margin` in the corners.
    pub fn with_corner_markers(name: &str, ids: [u8; 4], size: f64, margin: f64, to_scene: Homography) -> Self {
        let far = 1.0 - margin - size;
        let origins = [(margin, margin), (far, margin), (far, far), (margin, far)];
        Self {
            name: name.to_owned(),
            fiducials: ids
                .iter()
                .zip(origins)
                .map(|(&id, (x, y))| FiducialPlacement {
                    id,
                    origin: Point2::new(x, y),
                    size,
                })
                .collect(),
            to_scene,
        }
    }

    pub fn definition(&self) -> SurfaceDefinition {
        SurfaceDefinition {
            name: self.name.clone(),
            markers: self.fiducials.iter().map(|f| (f.id, f.corners())).collect(),
        }
    }

    /// Fiducial corners in scene pixels, by id.
    pub fn scene_corners(&self) -> Vec<(u8, [Point2; 4])> {
        self.fiducials
            .iter()
            .map(|f| {
                let c = f.corners().map(|p| self.to_scene.apply(p).expect("surface is in front of the camera"));
                (f.id, c)
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneRig {
    pub width: usize,
    pub height: usize,
    pub background: f64,
    pub noise_sd: f64,
    pub seed: u64,
}

impl Default for SceneRig {
    fn default() -> Self {
        Self {
            width: 1280,
            height: 720,
            background: 110.0,
            noise_sd: 0.0,
            seed: 0,
        }
    }
}

/// What is visible in a scene frame.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SceneContent {
    pub marker: Option<ConcentricMarker>,
    pub surfaces: Vec<PlacedSurface>,
}

struct Surface<'a> {
    placed: &'a PlacedSurface,
    to_surface: Homography,
    cells: Vec<[[bool; GRID]; GRID]>,
}

fn shade(rig: &SceneRig, content: &SceneContent, surfaces: &[Surface], p: Point2) -> f64 {
    if let Some(v) = content.marker.and_then(|m| m.shade(p)) {
        return v;
    }
    for s in surfaces {
        let Ok(q) = s.to_surface.apply(p) else {
            continue;
        };
        if !((0.0..=1.0).contains(&q.x) && (0.0..=1.0).contains(&q.y)) {
            continue;
        }
        for (f, cells) in s.placed.fiducials.iter().zip(&s.cells) {
            let u = (q.x - f.origin.x) / f.size * GRID as f64;
            let v = (q.y - f.origin.y) / f.size * GRID as f64;
            if (0.0..GRID as f64).contains(&u) && (0.0..GRID as f64).contains(&v) {
                return if cells[v as usize][u as usize] { INK } else { PAPER };
            }
        }
        return PAPER;
    }
    rig.background
}

/// Renders `content` with 4x4 supersampling along edges and Gaussian noise.
/// Pure in `(rig, content, t)`; `t` only seeds the noise and stamps the frame.
pub fn render_scene_frame(rig: &SceneRig, content: &SceneContent, t: f64) -> GrayFrame {
    let (w, h) = (rig.width, rig.height);
    let surfaces: Vec<Surface> = content
        .surfaces
        .iter()
        .map(|placed| Surface {
            placed,
            to_surface: placed.to_scene.inverse().expect("surface pose is invertible"),
            cells: placed
                .fiducials
                .iter()
                .map(|f| marker_cells(f.id).expect("placement ids are below 64"))
                .collect(),
        })
        .collect();
    let cw = w + 1;
    let mut corners = vec![0f64; cw * (h + 1)];
    for y in 0..=h {
        for x in 0..cw {
            corners[y * cw + x] = shade(rig, content, &surfaces, Point2::new(x as f64 - 0.5, y as f64 - 0.5));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rig.seed);
    rng.set_stream(t.to_bits());
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
            let uniform = c.iter().all(|v| (v - c[0]).abs() <= 1.0);
            // thin features can fall between corners, so check the centre too
            let centre = shade(rig, content, &surfaces, Point2::new(x as f64, y as f64));
            let mut v = if uniform && (centre - c[0]).abs() <= 1.0 {
                0.25 * c.iter().sum::<f64>()
            } else {
                let mut acc = 0.0;
                for sy in 0..4 {
                    for sx in 0..4 {
                        acc += shade(
                            rig,
                            content,
                            &surfaces,
                            Point2::new(x as f64 - 0.375 + 0.25 * sx as f64, y as f64 - 0.375 + 0.25 * sy as f64),
                        );
                    }
                }
                acc / 16.0
            };
            if let Some(n) = &noise {
                v += n.sample(&mut rng);
            }
            px[y * w + x] = v.round().clamp(0.0, 255.0) as u8;
        }
    }
    GrayFrame::new(w, h, px, t, StreamId::Scene).expect("rig dims are positive")
}

/// The nine calibration sites on a 3x3 grid, scene-normalized, row-major.
pub fn nine_point_sites() -> Vec<Point2> {
    let levels = [0.15, 0.5, 0.85];
    levels
        .iter()
        .flat_map(|&y| levels.iter().map(move |&x| Point2::new(x, y)))
        .collect()
}

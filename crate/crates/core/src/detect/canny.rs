//! Canny edge detection with thresholds derived from the median intensity.

use std::collections::VecDeque;

use crate::image::{gaussian_blur, median_intensity};
use crate::types::{GrayFrame, Point2};

/// Binary edge mask with the dimensions of its source image, plus the
/// sub-pixel offset of each edge pixel across its edge.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeMap {
    width: usize,
    height: usize,
    mask: Vec<bool>,
    offsets: Vec<[f32; 2]>,
}

impl EdgeMap {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            mask: vec![false; width * height],
            offsets: vec![[0.0; 2]; width * height],
        }
    }

    /// An empty map that shares the sub-pixel offsets of `self`.
    pub fn cleared(&self) -> Self {
        Self {
            mask: vec![false; self.mask.len()],
            ..self.clone()
        }
    }

    /// Sub-pixel position of the edge through pixel `p`.
    pub fn refine(&self, p: Point2) -> Point2 {
        let (x, y) = (p.x.round(), p.y.round());
        if x < 0.0 || y < 0.0 || x as usize >= self.width || y as usize >= self.height {
            return p;
        }
        let [dx, dy] = self.offsets[y as usize * self.width + x as usize];
        Point2::new(x + dx as f64, y + dy as f64)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.mask[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.mask[y * self.width + x] = v;
    }

    pub fn count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.mask.iter().any(|&m| m)
    }

    /// Edge pixel coordinates in raster order.
    pub fn pixels(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.mask
            .iter()
            .enumerate()
            .filter(|(_, &m)| m)
            .map(move |(i, _)| (i % self.width, i / self.width))
    }

    /// Set flags of the 8 neighbours of `(x, y)` in ring order, starting
    /// east; pixels outside the map count as unset.
    pub(crate) fn ring(&self, x: usize, y: usize) -> [bool; 8] {
        RING.map(|(dx, dy)| {
            let (nx, ny) = (x as isize + dx, y as isize + dy);
            nx >= 0
                && ny >= 0
                && (nx as usize) < self.width
                && (ny as usize) < self.height
                && self.mask[ny as usize * self.width + nx as usize]
        })
    }

    /// Whether `(x, y)` joins three or more separate edge branches.
    pub fn is_junction(&self, x: usize, y: usize) -> bool {
        neighbour_groups(self.ring(x, y)) >= 3
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.mask
    }
}

/// Hysteresis thresholds on the Sobel magnitude: `(0.66, 1.33) x median`.
pub fn auto_thresholds(frame: &GrayFrame) -> (f32, f32) {
    let m = median_intensity(frame) as f32;
    (0.66 * m, 1.33 * m)
}

/// Runs Gaussian smoothing, Sobel gradients, non-maximum suppression and
/// hysteresis on `frame`.
pub fn canny_edges(frame: &GrayFrame, sigma: f64) -> EdgeMap {
    let (low, high) = auto_thresholds(frame);
    canny_with_thresholds(frame, sigma, low, high)
}

pub fn canny_with_thresholds(frame: &GrayFrame, sigma: f64, low: f32, high: f32) -> EdgeMap {
    let (w, h) = (frame.width(), frame.height());
    let mut edges = EdgeMap::new(w, h);
    if w < 3 || h < 3 {
        return edges;
    }
    let s = gaussian_blur(frame, sigma);
    let mut gx = vec![0f32; w * h];
    let mut gy = vec![0f32; w * h];
    let mut mag = vec![0f32; w * h];
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            let p = |dx: isize, dy: isize| {
                s[(y as isize + dy) as usize * w + (x as isize + dx) as usize]
            };
            let sx = (p(1, -1) + 2.0 * p(1, 0) + p(1, 1)) - (p(-1, -1) + 2.0 * p(-1, 0) + p(-1, 1));
            let sy = (p(-1, 1) + 2.0 * p(0, 1) + p(1, 1)) - (p(-1, -1) + 2.0 * p(0, -1) + p(1, -1));
            let i = y * w + x;
            gx[i] = sx;
            gy[i] = sy;
            mag[i] = sx.hypot(sy);
        }
    }

    // 0: horizontal gradient, 1: 45deg, 2: vertical, 3: 135deg (y down)
    const TAN_22_5: f32 = 0.414_213_57;
    let mut nms = vec![0f32; w * h];
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            let i = y * w + x;
            let m = mag[i];
            if m < low || m == 0.0 {
                continue;
            }
            let (ax, ay) = (gx[i].abs(), gy[i].abs());
            // neighbours at -step and +step across the edge
            let step: (isize, isize) = if ay <= ax * TAN_22_5 {
                (1, 0)
            } else if ax <= ay * TAN_22_5 {
                (0, 1)
            } else if (gx[i] > 0.0) == (gy[i] > 0.0) {
                (1, 1)
            } else {
                (-1, 1)
            };
            let k = step.1 * w as isize + step.0;
            let (a, b) = (mag[(i as isize - k) as usize], mag[(i as isize + k) as usize]);
            // asymmetric comparison keeps exactly one pixel on flat ridges
            if m > a && m >= b {
                nms[i] = m;
                // vertex of the parabola through the three magnitudes
                let curv = a - 2.0 * m + b;
                let t = if curv < 0.0 { (0.5 * (a - b) / curv).clamp(-0.5, 0.5) } else { 0.0 };
                edges.offsets[i] = [t * step.0 as f32, t * step.1 as f32];
            }
        }
    }

    let mut queue = VecDeque::new();
    for i in 0..w * h {
        if nms[i] > 0.0 && nms[i] >= high {
            edges.mask[i] = true;
            queue.push_back(i);
        }
    }
    while let Some(i) = queue.pop_front() {
        let (x, y) = (i % w, i / w);
        for dy in -1isize..=1 {
            for dx in -1isize..=1 {
                if dx == 0 && dy == 0 {
                    continue;
                }
                let (nx, ny) = (x as isize + dx, y as isize + dy);
                if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                    continue;
                }
                let j = ny as usize * w + nx as usize;
                if !edges.mask[j] && nms[j] > 0.0 && nms[j] >= low {
                    edges.mask[j] = true;
                    queue.push_back(j);
                }
            }
        }
    }
    thin_staircases(&mut edges, &mag);
    edges
}

/// Ring of the 8 neighbours in circular order, starting east.
pub(crate) const RING: [(isize, isize); 8] = [(1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0), (-1, -1), (0, -1), (1, -1)];

/// Number of 8-connected groups among the set neighbours of a pixel.
pub(crate) fn neighbour_groups(set: [bool; 8]) -> usize {
    let mut parent: [usize; 8] = std::array::from_fn(|k| k);
    fn root(p: &mut [usize; 8], mut k: usize) -> usize {
        while p[k] != k {
            k = p[k];
        }
        k
    }
    for a in 0..8 {
        for b in a + 1..8 {
            let (da, db) = (RING[a], RING[b]);
            let adjacent = (da.0 - db.0).abs() <= 1 && (da.1 - db.1).abs() <= 1;
            if set[a] && set[b] && adjacent {
                let (ra, rb) = (root(&mut parent, a), root(&mut parent, b));
                parent[ra] = rb;
            }
        }
    }
    (0..8).filter(|&k| set[k] && root(&mut parent, k) == k).count()
}

/// Drops edge pixels whose neighbours stay connected without them, so
/// diagonal runs and staircase corners become one pixel wide. Weaker
/// gradients go first, which keeps the ridge of a two-pixel band. Chain
/// ends (a single neighbour) are never removed.
fn thin_staircases(edges: &mut EdgeMap, mag: &[f32]) {
    let (w, h) = (edges.width, edges.height);
    if w < 3 || h < 3 {
        return;
    }
    let neighbours = |mask: &[bool], i: usize| {
        let (x, y) = ((i % w) as isize, (i / w) as isize);
        RING.map(|(dx, dy)| mask[(y + dy) as usize * w + (x + dx) as usize])
    };
    let removable = |set: [bool; 8]| {
        let n = set.iter().filter(|&&b| b).count();
        (2..=4).contains(&n) && neighbour_groups(set) == 1
    };
    let mut order: Vec<usize> = (1..h - 1)
        .flat_map(|y| (1..w - 1).map(move |x| y * w + x))
        .filter(|&i| edges.mask[i] && removable(neighbours(&edges.mask, i)))
        .collect();
    order.sort_by(|&a, &b| mag[a].total_cmp(&mag[b]).then(a.cmp(&b)));
    for i in order {
        if removable(neighbours(&edges.mask, i)) {
            edges.mask[i] = false;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{Ellipse, Point2, StreamId};

    #[test]
    fn uniform_image_has_no_edges() {
        let f = GrayFrame::filled(40, 30, 90).unwrap();
        assert!(canny_edges(&f, 1.0).is_empty());
    }

    #[test]
    fn vertical_step_gives_one_column() {
        let (w, h) = (40, 30);
        let px: Vec<u8> = (0..w * h)
            .map(|i| if i % w < w / 2 { 0 } else { 255 })
            .collect();
        let f = GrayFrame::new(w, h, px, 0.0, StreamId::Eye).unwrap();
        let e = canny_edges(&f, 1.0);
        // the analytic gradient peak lies between columns 19 and 20
        let cols: Vec<usize> = e.pixels().map(|(x, _)| x).collect();
        assert!(!cols.is_empty());
        let first = cols[0];
        assert!(first == 19 || first == 20, "{first}");
        assert!(cols.iter().all(|&c| c == first));
        // one pixel per interior row: a single chain
        let rows: Vec<usize> = e.pixels().map(|(_, y)| y).collect();
        assert_eq!(rows, (1..h - 1).collect::<Vec<_>>());
    }

    #[test]
    fn ellipse_edges_lie_on_contour() {
        let (w, h) = (160, 120);
        let truth = Ellipse::new(Point2::new(80.3, 61.7), 40.0, 25.0, 0.5);
        let mut px = vec![200u8; w * h];
        for y in 0..h {
            for x in 0..w {
                // 4x4 supersampled coverage
                let mut cov = 0.0f64;
                for sy in 0..4 {
                    for sx in 0..4 {
                        let p = Point2::new(
                            x as f64 - 0.375 + 0.25 * sx as f64,
                            y as f64 - 0.375 + 0.25 * sy as f64,
                        );
                        if truth.contains(p) {
                            cov += 1.0 / 16.0;
                        }
                    }
                }
                px[y * w + x] = (200.0 - 180.0 * cov).round() as u8;
            }
        }
        let f = GrayFrame::new(w, h, px, 0.0, StreamId::Eye).unwrap();
        let e = canny_edges(&f, 1.0);
        assert!(e.count() > 150);
        for (x, y) in e.pixels() {
            let d = crate::detect::fit::point_distance(&truth, Point2::new(x as f64, y as f64));
            assert!(d <= 1.0, "edge pixel ({x},{y}) is {d} px off");
        }
    }
}

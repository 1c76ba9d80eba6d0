//! Edge pixels linked into ordered, 8-connected chains.

use serde::{Deserialize, Serialize};

use crate::detect::canny::EdgeMap;
use crate::types::Point2;

/// An ordered chain of pixel positions; consecutive points are 8-neighbours.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Contour {
    pub points: Vec<Point2>,
}

impl Contour {
    pub fn new(points: Vec<Point2>) -> Self {
        Self { points }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Polyline length: sum of the 1 and sqrt(2) steps along the chain.
    pub fn arc_length(&self) -> f64 {
        self.points.windows(2).map(|w| w[0].distance(w[1])).sum()
    }

    pub fn translated(&self, dx: f64, dy: f64) -> Contour {
        Contour::new(
            self.points
                .iter()
                .map(|p| Point2::new(p.x + dx, p.y + dy))
                .collect(),
        )
    }
}

// 4-neighbours first so staircase corners are walked pixel by pixel.
const NEIGHBORS: [(isize, isize); 8] = [
    (1, 0),
    (0, 1),
    (-1, 0),
    (0, -1),
    (1, 1),
    (-1, 1),
    (-1, -1),
    (1, -1),
];

fn next_unvisited(
    edges: &EdgeMap,
    visited: &[bool],
    (x, y): (usize, usize),
) -> Option<(usize, usize)> {
    let (w, h) = (edges.width() as isize, edges.height() as isize);
    NEIGHBORS.iter().find_map(|&(dx, dy)| {
        let (nx, ny) = (x as isize + dx, y as isize + dy);
        if nx < 0 || ny < 0 || nx >= w || ny >= h {
            return None;
        }
        let (nx, ny) = (nx as usize, ny as usize);
        (edges.get(nx, ny) && !visited[ny * w as usize + nx]).then_some((nx, ny))
    })
}

fn walk(edges: &EdgeMap, visited: &mut [bool], start: (usize, usize)) -> Vec<(usize, usize)> {
    let w = edges.width();
    let mut out = Vec::new();
    let mut cur = start;
    while let Some(n) = next_unvisited(edges, visited, cur) {
        visited[n.1 * w + n.0] = true;
        out.push(n);
        if edges.is_junction(n.0, n.1) {
            break;
        }
        cur = n;
    }
    out
}

/// Links the edge pixels into chains.
///
/// Pixels are seeded in raster order; from each seed the chain is traced in
/// both directions and joined, so a seed in the middle of a curve still
/// yields one chain. Every edge pixel ends up in at most one contour; a pixel
/// left with no unvisited neighbour forms a one-point chain, which carries no
/// direction and is discarded.
///
/// Chains end at junctions, pixels where three or more branches meet, so an
/// eyelid edge touching the pupil outline stays a separate chain. A junction
/// pixel joins the first chain that reaches it and never seeds one.
pub fn extract_contours(edges: &EdgeMap) -> Vec<Contour> {
    let w = edges.width();
    let mut visited = vec![false; w * edges.height()];
    let mut out = Vec::new();
    for (x, y) in edges.pixels() {
        if visited[y * w + x] || edges.is_junction(x, y) {
            continue;
        }
        visited[y * w + x] = true;
        let forward = walk(edges, &mut visited, (x, y));
        let backward = walk(edges, &mut visited, (x, y));
        let chain: Vec<Point2> = backward
            .iter()
            .rev()
            .chain(std::iter::once(&(x, y)))
            .chain(forward.iter())
            .map(|&(px, py)| Point2::new(px as f64, py as f64))
            .collect();
        if chain.len() >= 2 {
            out.push(Contour::new(chain));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn map(w: usize, h: usize, pts: &[(usize, usize)]) -> EdgeMap {
        let mut m = EdgeMap::new(w, h);
        for &(x, y) in pts {
            m.set(x, y, true);
        }
        m
    }

    fn assert_chain(c: &Contour) {
        for pair in c.points.windows(2) {
            let d = pair[1] - pair[0];
            assert!(d.x.abs() <= 1.0 && d.y.abs() <= 1.0 && (d.x != 0.0 || d.y != 0.0));
        }
    }

    #[test]
    fn single_line() {
        let pts: Vec<_> = (3..13).map(|x| (x, 5)).collect();
        let cs = extract_contours(&map(20, 10, &pts));
        assert_eq!(cs.len(), 1);
        assert_eq!(cs[0].len(), 10);
        assert_chain(&cs[0]);
        assert!((cs[0].arc_length() - 9.0).abs() < 1e-12);
    }

    #[test]
    fn two_disjoint_pieces() {
        let mut pts: Vec<_> = (1..8).map(|x| (x, 1)).collect();
        pts.extend((10..16).map(|y| (12, y)));
        let cs = extract_contours(&map(20, 20, &pts));
        assert_eq!(cs.len(), 2);
        let total: usize = cs.iter().map(Contour::len).sum();
        assert_eq!(total, pts.len());
    }

    #[test]
    fn seed_in_middle_of_diagonal() {
        // raster order seeds at the top of a "V": both arms must join
        let mut pts = vec![];
        for i in 0..6 {
            pts.push((5 - i, 1 + i));
            pts.push((6 + i, 1 + i));
        }
        let cs = extract_contours(&map(15, 10, &pts));
        assert_eq!(cs.len(), 1);
        assert_eq!(cs[0].len(), 12);
        assert_chain(&cs[0]);
    }
}

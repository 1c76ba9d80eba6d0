//! Edge filtering by local intensity: edges must border dark pixels and must
//! not border specular reflections.

use crate::detect::canny::EdgeMap;
use crate::image::min_max_filter;
use crate::types::GrayFrame;

/// Half-width of the square neighbourhood (5x5 window).
pub const NEIGHBORHOOD_RADIUS: usize = 2;

/// Keeps edge pixels whose 5x5 neighbourhood contains a pixel `<= dark` and no
/// pixel `>= saturation`.
pub fn filter_edges(edges: &EdgeMap, frame: &GrayFrame, dark: u8, saturation: u8) -> EdgeMap {
    assert_eq!(
        (edges.width(), edges.height()),
        (frame.width(), frame.height()),
        "edge map and frame dimensions differ"
    );
    let (lo, hi) = min_max_filter(frame, NEIGHBORHOOD_RADIUS);
    let mut out = edges.cleared();
    let w = edges.width();
    for (x, y) in edges.pixels() {
        let i = y * w + x;
        if lo[i] <= dark && hi[i] < saturation {
            out.set(x, y, true);
        }
    }
    out
}

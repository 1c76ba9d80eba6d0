//! Candidate ellipse search over sub-contours.
//!
//! Seeds are sub-contours whose own ellipse fit is tight and has a plausible
//! pupil size. Each candidate is grown by adding sub-contours that lie on its
//! ellipse, refitting after every addition, in a beam of the best partial
//! candidates. Candidates are ranked by confidence, the ratio of supporting
//! edge length to the ellipse circumference.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::config::DetectorParams;
use crate::detect::contour::Contour;
use crate::detect::fit::{circumference, fit_ellipse, point_distance, rms_residual};
use crate::types::{Ellipse, Point2};

/// Largest RMS residual (pixels) of an acceptable fit.
pub const MAX_FIT_RESIDUAL: f64 = 1.5;
/// A sub-contour supports a candidate when this fraction of its points ...
pub const SUPPORT_FRACTION: f64 = 0.8;
/// ... lies within this distance (pixels) of the candidate ellipse.
pub const SUPPORT_BAND: f64 = 2.0;
/// Number of partial candidates kept per search level.
pub const BEAM_WIDTH: usize = 10;
/// Seeds need enough points for a meaningful curvature.
pub const MIN_SEED_POINTS: usize = 10;
/// Minor to major axis ratio below which a fit is rejected as a sliver.
pub const MIN_AXIS_RATIO: f64 = 0.2;

/// An ellipse hypothesis with the sub-contours supporting it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateFit {
    pub ellipse: Ellipse,
    /// Indices into the sub-contour list, ascending.
    pub support_contours: Vec<usize>,
    pub support_length: f64,
    pub fit_residual: f64,
    pub confidence: f64,
}

impl CandidateFit {
    fn build(
        ellipse: Ellipse,
        support: Vec<usize>,
        contours: &[Contour],
        lengths: &[f64],
        points: &[Point2],
    ) -> Self {
        let support_length: f64 = support.iter().map(|&i| lengths[i]).sum();
        let residual = rms_residual(&ellipse, points);
        let confidence = confidence_of(&ellipse, support_length);
        let _ = contours;
        Self {
            ellipse,
            support_contours: support,
            support_length,
            fit_residual: residual,
            confidence,
        }
    }

}

/// `min(1, support_length / circumference)`.
pub fn confidence_of(e: &Ellipse, support_length: f64) -> f64 {
    match circumference(e) {
        Ok(c) if c > 0.0 => (support_length / c).clamp(0.0, 1.0),
        _ => 0.0,
    }
}

/// Outcome of a search, with counters useful for debugging.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct SearchReport {
    pub best: Option<CandidateFit>,
    pub seeds: Vec<CandidateFit>,
    pub refits: usize,
}

fn plausible(e: &Ellipse, params: &DetectorParams) -> bool {
    let (lo, hi) = params.pupil_radius_range;
    e.a >= lo && e.a <= hi && e.b >= MIN_AXIS_RATIO * e.a
}

fn supports(e: &Ellipse, c: &Contour) -> bool {
    // cheap reject: every point is at least |d_center| - a away from the ellipse
    let needed = (SUPPORT_FRACTION * c.len() as f64).ceil() as usize;
    let mut inside = 0usize;
    let mut outside = 0usize;
    let allowed_out = c.len() - needed;
    for p in &c.points {
        let far = p.distance(e.center) - e.a;
        let d = if far > SUPPORT_BAND {
            far
        } else {
            point_distance(e, *p)
        };
        if d <= SUPPORT_BAND {
            inside += 1;
            if inside >= needed {
                return true;
            }
        } else {
            outside += 1;
            if outside > allowed_out {
                return false;
            }
        }
    }
    inside >= needed
}

fn gather(contours: &[Contour], set: &[usize]) -> Vec<Point2> {
    set.iter()
        .flat_map(|&i| contours[i].points.iter().copied())
        .collect()
}

/// Finds the best-supported ellipse among `contours`, or `None`.
pub fn combinatorial_search(contours: &[Contour], params: &DetectorParams) -> Option<CandidateFit> {
    search_with_report(contours, params, |_| true).best
}

/// Full search. `accept` is an extra test on finished candidates (the
/// detector checks image contrast across the outline with it).
pub fn search_with_report(
    contours: &[Contour],
    params: &DetectorParams,
    accept: impl Fn(&Ellipse) -> bool,
) -> SearchReport {
    let lengths: Vec<f64> = contours.iter().map(Contour::arc_length).collect();
    let mut report = SearchReport::default();
    let by_rank = |a: &CandidateFit, b: &CandidateFit| {
        b.confidence
            .total_cmp(&a.confidence)
            .then(a.fit_residual.total_cmp(&b.fit_residual))
    };

    for (i, c) in contours.iter().enumerate() {
        if c.len() < MIN_SEED_POINTS {
            continue;
        }
        let Ok(e) = fit_ellipse(&c.points) else {
            continue;
        };
        if !plausible(&e, params) {
            continue;
        }
        let cand = CandidateFit::build(e, vec![i], contours, &lengths, &c.points);
        if cand.fit_residual <= MAX_FIT_RESIDUAL {
            report.seeds.push(cand);
        }
    }
    report.seeds.sort_by(by_rank);

    let mut pool: Vec<CandidateFit> = report.seeds.clone();
    let mut seen: HashSet<Vec<usize>> = pool.iter().map(|s| s.support_contours.clone()).collect();
    let mut refits = 0usize;
    let budget = params.max_support_combinations;

    // Short arcs fitted alone are poorly conditioned, so pairs of long
    // contours are also fitted jointly and kept when both lie on the result.
    let mut long: Vec<usize> = (0..contours.len())
        .filter(|&i| contours[i].len() >= MIN_SEED_POINTS)
        .collect();
    long.sort_by(|&a, &b| lengths[b].total_cmp(&lengths[a]).then(a.cmp(&b)));
    long.truncate(PAIR_POOL);
    let reach = 2.0 * params.pupil_radius_range.1 + 2.0 * SUPPORT_BAND;
    'pairs: for (k, &i) in long.iter().enumerate() {
        for &j in &long[k + 1..] {
            let (lo, hi) = (i.min(j), i.max(j));
            let set = vec![lo, hi];
            if seen.contains(&set) || span(&contours[lo], &contours[hi]) > reach {
                continue;
            }
            if refits >= budget {
                break 'pairs;
            }
            refits += 1;
            seen.insert(set.clone());
            let pts = gather(contours, &set);
            let Ok(e) = fit_ellipse(&pts) else {
                continue;
            };
            if !plausible(&e, params) || !supports(&e, &contours[lo]) || !supports(&e, &contours[hi]) {
                continue;
            }
            let cand = CandidateFit::build(e, set, contours, &lengths, &pts);
            if cand.fit_residual <= MAX_FIT_RESIDUAL {
                pool.push(cand);
            }
        }
    }

    let mut beam: Vec<CandidateFit> = pool.clone();
    beam.sort_by(by_rank);
    beam.truncate(BEAM_WIDTH);
    'levels: while !beam.is_empty() {
        let mut next: Vec<CandidateFit> = Vec::new();
        for cand in &beam {
            for (j, c) in contours.iter().enumerate() {
                if c.len() < 2 || cand.support_contours.binary_search(&j).is_ok() {
                    continue;
                }
                if !supports(&cand.ellipse, c) {
                    continue;
                }
                let mut set = cand.support_contours.clone();
                let pos = set.binary_search(&j).unwrap_err();
                set.insert(pos, j);
                if !seen.insert(set.clone()) {
                    continue;
                }
                if refits >= budget {
                    break 'levels;
                }
                refits += 1;
                let pts = gather(contours, &set);
                let Ok(e) = fit_ellipse(&pts) else {
                    continue;
                };
                if !plausible(&e, params) {
                    continue;
                }
                let grown = CandidateFit::build(e, set, contours, &lengths, &pts);
                if grown.fit_residual <= MAX_FIT_RESIDUAL {
                    next.push(grown);
                }
            }
        }
        next.sort_by(by_rank);
        pool.extend(next.iter().cloned());
        next.truncate(BEAM_WIDTH);
        beam = next;
    }

    // A candidate whose support is strictly contained in another accepted
    // candidate's support is an incomplete explanation of the same edges.
    pool.retain(|c| accept(&c.ellipse));
    pool.sort_by(by_rank);
    report.best = pool
        .iter()
        .find(|c| !pool.iter().any(|o| strict_superset(&o.support_contours, &c.support_contours)))
        .cloned();
    report.refits = refits;
    report
}

/// Fraction of points kept at each trimming round of [`split_inconsistent`].
const TRIM_KEEP: f64 = 0.7;
const TRIM_ROUNDS: usize = 3;
/// Smallest inlier fraction for which a trimmed fit is trusted.
const MIN_INLIER_FRACTION: f64 = 0.5;

/// Splits long contours that no single ellipse explains, such as a pupil arc
/// joined to an eyelid edge at a shallow corner.
///
/// A trimmed fit (repeatedly dropping the worst-fitting points) finds the
/// dominant elliptical part; the contour is then cut into runs of inliers and
/// outliers. Contours that fit well, or whose trimmed fit is not convincing,
/// are kept whole. Point order is preserved.
pub fn split_inconsistent(contours: &[Contour]) -> Vec<Contour> {
    let mut out = Vec::with_capacity(contours.len());
    for c in contours {
        match inlier_mask(c) {
            Some(mask) => {
                let mut run: Vec<Point2> = Vec::new();
                let mut state = mask[0];
                for (p, &m) in c.points.iter().zip(&mask) {
                    if m != state && !run.is_empty() {
                        out.push(Contour::new(std::mem::take(&mut run)));
                        state = m;
                    }
                    run.push(*p);
                }
                if !run.is_empty() {
                    out.push(Contour::new(run));
                }
            }
            None => out.push(c.clone()),
        }
    }
    out
}

fn inlier_mask(c: &Contour) -> Option<Vec<bool>> {
    if c.len() < 2 * MIN_SEED_POINTS {
        return None;
    }
    if fit_ellipse(&c.points).is_ok_and(|e| rms_residual(&e, &c.points) <= MAX_FIT_RESIDUAL) {
        return None;
    }
    let mut subset: Vec<Point2> = c.points.clone();
    let mut e = fit_ellipse(&subset).ok()?;
    for _ in 0..TRIM_ROUNDS {
        let mut scored: Vec<(f64, Point2)> =
            subset.iter().map(|p| (point_distance(&e, *p), *p)).collect();
        scored.sort_by(|a, b| a.0.total_cmp(&b.0));
        let keep = ((scored.len() as f64) * TRIM_KEEP).ceil() as usize;
        subset = scored.into_iter().take(keep.max(5)).map(|(_, p)| p).collect();
        e = fit_ellipse(&subset).ok()?;
        // grow back every point of the contour that agrees with the trimmed fit
        let grown: Vec<Point2> = c
            .points
            .iter()
            .copied()
            .filter(|p| point_distance(&e, *p) <= SUPPORT_BAND)
            .collect();
        if grown.len() >= 5 {
            subset = grown;
            e = fit_ellipse(&subset).ok()?;
        }
    }
    let mask: Vec<bool> = c
        .points
        .iter()
        .map(|p| point_distance(&e, *p) <= SUPPORT_BAND)
        .collect();
    let inliers = mask.iter().filter(|&&m| m).count();
    let good = inliers as f64 >= MIN_INLIER_FRACTION * c.len() as f64
        && inliers < c.len()
        && rms_residual(&e, &subset) <= MAX_FIT_RESIDUAL;
    good.then_some(mask)
}

/// Longest contours considered for joint pair fits.
const PAIR_POOL: usize = 24;

fn strict_superset(big: &[usize], small: &[usize]) -> bool {
    big.len() > small.len() && small.iter().all(|i| big.binary_search(i).is_ok())
}

/// Diagonal of the joint bounding box of two contours.
fn span(a: &Contour, b: &Contour) -> f64 {
    let (mut x0, mut y0, mut x1, mut y1) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
    for p in a.points.iter().chain(&b.points) {
        x0 = x0.min(p.x);
        y0 = y0.min(p.y);
        x1 = x1.max(p.x);
        y1 = y1.max(p.y);
    }
    (x1 - x0).hypot(y1 - y0)
}

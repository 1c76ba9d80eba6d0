//! Randomized invariants, 200 cases each.

mod common;

use std::f64::consts::PI;

use gazelab::detect::{detect, detect_with_trace, fit_ellipse};
use gazelab::eval::{
    accuracy, detection_rate_curve, ellipse_hausdorff, filter_outliers, precision, AngularPair,
};
use gazelab::gaze::{calibrate, map_gaze, CalibrationPair};
use gazelab::io::recording::{read_gaze_csv, write_gaze_csv, RecordRow};
use gazelab::io::{Bus, Topic};
use gazelab::surface::{estimate_homography, Homography};
use gazelab::synth::{render_eye_frame, EyeRig, PupilTrajectory};
use gazelab::timing::pair_by_time;
use gazelab::{
    angular_distance, norm_from_pixel, pixel_from_norm, CameraIntrinsics, DetectorParams, Ellipse, Point2,
    PupilDatum,
};
use proptest::prelude::*;

fn config() -> ProptestConfig {
    ProptestConfig {
        cases: 200,
        failure_persistence: None,
        ..ProptestConfig::default()
    }
}

fn eye_rig() -> impl Strategy<Value = EyeRig> {
    (230.0..410.0f64, 180.0..300.0f64, 28.0..45.0f64, 0.6..1.0f64, 0.0..PI, 0.0..4.0f64, 0u64..10_000).prop_map(
        |(cx, cy, a, ratio, theta, noise, seed)| EyeRig {
            trajectory: PupilTrajectory::Fixed(Ellipse::new(Point2::new(cx, cy), a, a * ratio, theta)),
            noise_sd: noise,
            seed,
            ..Default::default()
        },
    )
}

fn ellipse() -> impl Strategy<Value = Ellipse> {
    (-50.0..50.0f64, -50.0..50.0f64, 1.0..40.0f64, 0.2..1.0f64, 0.0..PI)
        .prop_map(|(x, y, a, r, t)| Ellipse::new(Point2::new(x, y), a, a * r, t))
}

fn point(lo: f64, hi: f64) -> impl Strategy<Value = Point2> {
    (lo..hi, lo..hi).prop_map(|(x, y)| Point2::new(x, y))
}

fn homography() -> impl Strategy<Value = Homography> {
    (0.5..2.0f64, -0.3..0.3f64, -0.3..0.3f64, 0.5..2.0f64, -1.0..1.0f64, -1.0..1.0f64, -0.2..0.2f64, -0.2..0.2f64)
        .prop_filter_map("singular", |(a, b, c, d, tx, ty, g, h)| {
            Homography::from_matrix([[a, b, tx], [c, d, ty], [g, h, 1.0]]).ok()
        })
}

fn sorted_times(max_len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0..10.0f64, 0..max_len).prop_map(|mut v| {
        v.sort_by(f64::total_cmp);
        v
    })
}

fn angular_pairs() -> impl Strategy<Value = Vec<AngularPair>> {
    let intr = CameraIntrinsics::default_scene();
    prop::collection::vec((point(0.0, 1280.0), point(0.0, 1280.0), 0usize..9), 0..60).prop_map(move |v| {
        v.into_iter()
            .enumerate()
            .map(|(k, (g, t, s))| AngularPair::new(g, t, &intr, s, k as f64))
            .collect()
    })
}

fn rigid(angle: f64, shift: Point2) -> impl Fn(Point2) -> Point2 {
    let (s, c) = angle.sin_cos();
    move |p| Point2::new(c * p.x - s * p.y + shift.x, s * p.x + c * p.y + shift.y)
}

fn close(a: Point2, b: Point2, tol: f64) -> bool {
    a.distance(b) <= tol * (1.0 + a.x.abs().max(a.y.abs()))
}

proptest! {
    #![proptest_config(config())]

    #[test]
    fn detector_is_deterministic(rig in eye_rig()) {
        let frame = render_eye_frame(&rig, 0.0).frame;
        let params = DetectorParams::default();
        prop_assert_eq!(detect(&frame, &params).unwrap(), detect(&frame, &params).unwrap());
    }

    #[test]
    fn detector_confidence_matches_support_over_circumference(rig in eye_rig()) {
        let frame = render_eye_frame(&rig, 0.0).frame;
        let params = DetectorParams::default();
        let trace = detect_with_trace(&frame, &params).unwrap();
        if let Some(d) = trace.result {
            prop_assert!((0.0..=1.0).contains(&d.confidence));
            prop_assert!(d.confidence >= params.confidence_threshold);
            prop_assert!((0.0..=1.0).contains(&d.norm_pos.x) && (0.0..=1.0).contains(&d.norm_pos.y));
            let best = trace.best.expect("a result has a best candidate");
            let expected = (best.support_length / common::perimeter_by_quadrature(best.ellipse.a, best.ellipse.b)).min(1.0);
            prop_assert!((d.confidence - expected).abs() < 1e-5, "{} vs {}", d.confidence, expected);
        }
    }

    #[test]
    fn detector_shift_moves_centre(rig in eye_rig(), dx in -25i64..=25, dy in -25i64..=25) {
        let frame = render_eye_frame(&rig, 0.0).frame;
        let moved = common::shift_frame(&frame, dx, dy);
        let params = DetectorParams::default();
        let (d0, d1) = (detect(&frame, &params).unwrap(), detect(&moved, &params).unwrap());
        prop_assert_eq!(d0.is_some(), d1.is_some());
        if let (Some(p), Some(q)) = (d0, d1) {
            prop_assert!((q.ellipse.center.x - p.ellipse.center.x - dx as f64).abs() <= 0.5);
            prop_assert!((q.ellipse.center.y - p.ellipse.center.y - dy as f64).abs() <= 0.5);
        }
    }

    #[test]
    fn ellipse_fit_is_a_projector(e in ellipse(), n in 6usize..60) {
        let fit = fit_ellipse(&e.sample(n)).unwrap();
        let refit = fit_ellipse(&fit.sample(n)).unwrap();
        for (p, q) in fit.sample(16).into_iter().zip(refit.sample(16)) {
            prop_assert!(close(p, q, 1e-9), "{:?} vs {:?}", p, q);
        }
    }

    #[test]
    fn hausdorff_is_a_symmetric_metric(e1 in ellipse(), e2 in ellipse()) {
        let d12 = ellipse_hausdorff(&e1, &e2);
        let d21 = ellipse_hausdorff(&e2, &e1);
        prop_assert!(d12 >= 0.0);
        prop_assert!((d12 - d21).abs() <= 1e-9 * (1.0 + d12));
        prop_assert!(ellipse_hausdorff(&e1, &e1) == 0.0);
    }

    #[test]
    fn detection_rate_curve_is_monotone(
        errors in prop::collection::vec(prop::option::of(0.0..20.0f64), 0..200),
        thresholds in prop::collection::vec(0.0..25.0f64, 1..30),
    ) {
        let c = detection_rate_curve(&errors, &thresholds);
        prop_assert!(c.rates.iter().all(|r| (0.0..=1.0).contains(r)));
        prop_assert!(c.rates.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn outlier_filter_partitions_its_input(pairs in angular_pairs(), limit in 0.0..40.0f64) {
        let (kept, dropped) = filter_outliers(&pairs, limit);
        prop_assert_eq!(kept.len() + dropped.len(), pairs.len());
        prop_assert!(kept.iter().all(|p| p.distance <= limit));
        prop_assert!(dropped.iter().all(|p| p.distance > limit));
        let mut merged: Vec<f64> = kept.iter().chain(&dropped).map(|p| p.timestamp).collect();
        merged.sort_by(f64::total_cmp);
        let all: Vec<f64> = pairs.iter().map(|p| p.timestamp).collect();
        prop_assert_eq!(merged, all);
    }

    #[test]
    fn accuracy_and_precision_ignore_rigid_motion(
        pairs in angular_pairs(),
        windows in prop::collection::vec(prop::collection::vec(point(0.0, 1280.0), 2..20), 1..6),
        angle in -PI..PI,
        shift in point(-500.0, 500.0),
    ) {
        let intr = CameraIntrinsics::default_scene();
        let f = rigid(angle, shift);
        let moved: Vec<AngularPair> = pairs
            .iter()
            .map(|p| AngularPair::new(f(p.gaze), f(p.target), &intr, p.site, p.timestamp))
            .collect();
        if !pairs.is_empty() {
            let (a, b) = (accuracy(&pairs).unwrap(), accuracy(&moved).unwrap());
            prop_assert!((a - b).abs() <= 1e-9 * (1.0 + a));
        }
        let moved_windows: Vec<Vec<Point2>> = windows.iter().map(|w| w.iter().map(|&p| f(p)).collect()).collect();
        let (a, b) = (precision(&windows, &intr).unwrap(), precision(&moved_windows, &intr).unwrap());
        prop_assert!((a - b).abs() <= 1e-9 * (1.0 + a));
    }

    #[test]
    fn angular_distance_is_a_metric(p in point(0.0, 1280.0), q in point(0.0, 1280.0), r in point(0.0, 1280.0)) {
        let intr = CameraIntrinsics::default_scene();
        let d = |a, b| angular_distance(a, b, &intr);
        prop_assert!(d(p, q) >= 0.0);
        prop_assert_eq!(d(p, q), d(q, p));
        prop_assert_eq!(d(p, p), 0.0);
        prop_assert_eq!(d(p, q) == 0.0, p == q);
        prop_assert!(d(p, r) <= d(p, q) + d(q, r) + 1e-12);
    }

    #[test]
    fn normalized_pixel_round_trip(x in 0.0..1.0f64, y in 0.0..1.0f64, w in 1usize..4000, h in 1usize..4000) {
        let px = pixel_from_norm(Point2::new(x * w as f64, y * h as f64), 1, 1);
        let n = norm_from_pixel(px, w, h);
        let back = pixel_from_norm(n, w, h);
        prop_assert!(back.distance(px) <= 1e-9 * (w.max(h) as f64));
        prop_assert!((n.x - x).abs() <= 1e-12 && (n.y - y).abs() <= 1e-12);
    }

    #[test]
    fn homography_round_trip(h in homography(), p in point(0.0, 1.0)) {
        let inv = h.inverse().unwrap();
        let q = h.apply(p).unwrap();
        let back = inv.apply(q).unwrap();
        prop_assert!(back.distance(p) < 1e-9, "{:?} -> {:?}", p, back);
    }

    #[test]
    fn homography_estimate_ignores_similarity_prenormalization(
        h in homography(),
        src in prop::collection::vec(point(0.0, 1.0), 6..20),
        noise in prop::collection::vec(point(-1e-3, 1e-3), 20),
        angle in -PI..PI,
        scale in 0.1..10.0f64,
        shift in point(-5.0, 5.0),
    ) {
        let pairs: Vec<(Point2, Point2)> = src
            .iter()
            .zip(&noise)
            .map(|(&p, &e)| (p, h.apply(p).unwrap() + e))
            .collect();
        let Ok(direct) = estimate_homography(&pairs) else { return Ok(()); };
        let rot = rigid(angle, shift);
        let s = |p: Point2| rot(p * scale);
        let moved: Vec<(Point2, Point2)> = pairs.iter().map(|&(p, q)| (s(p), q)).collect();
        let via = estimate_homography(&moved).unwrap();
        for &(p, _) in &pairs {
            let a = direct.apply(p).unwrap();
            let b = via.apply(s(p)).unwrap();
            prop_assert!(close(a, b, 1e-9), "{:?} vs {:?}", a, b);
        }
    }

    #[test]
    fn calibration_residual_never_grows_with_degree(
        pts in prop::collection::vec((point(0.0, 1.0), point(0.0, 1.0)), 10..40),
    ) {
        let pairs: Vec<CalibrationPair> = pts
            .iter()
            .map(|&(pupil, target)| CalibrationPair { pupil, target, timestamp: 0.0 })
            .collect();
        let mut last = f64::INFINITY;
        for degree in 1..=3 {
            let Ok(m) = calibrate(&pairs, degree) else { break; };
            prop_assert!(m.rms_residual <= last + 1e-12, "degree {}: {} > {}", degree, m.rms_residual, last);
            last = m.rms_residual;
        }
    }

    #[test]
    fn calibration_recovers_polynomials_exactly(
        cx in prop::collection::vec(-1.0..1.0f64, 6),
        cy in prop::collection::vec(-1.0..1.0f64, 6),
        jitter in prop::collection::vec(point(-0.03, 0.03), 9),
    ) {
        let f = |p: Point2, c: &[f64]| c[0] + c[1] * p.x + c[2] * p.y + c[3] * p.x * p.x + c[4] * p.x * p.y + c[5] * p.y * p.y;
        let pairs: Vec<CalibrationPair> = (0..9)
            .map(|k| {
                let p = Point2::new(0.2 + 0.3 * (k % 3) as f64, 0.2 + 0.3 * (k / 3) as f64) + jitter[k];
                CalibrationPair { pupil: p, target: Point2::new(f(p, &cx), f(p, &cy)), timestamp: 0.0 }
            })
            .collect();
        let m = calibrate(&pairs, 2).unwrap();
        prop_assert!(m.rms_residual < 1e-10, "{}", m.rms_residual);
    }

    #[test]
    fn mapped_gaze_moves_at_most_lipschitz_times_input(
        pts in prop::collection::vec((point(0.0, 1.0), point(0.0, 1.0)), 12..30),
        p in point(0.0, 1.0),
        delta in point(-0.05, 0.05),
        degree in 1usize..=3,
    ) {
        let pairs: Vec<CalibrationPair> = pts
            .iter()
            .map(|&(pupil, target)| CalibrationPair { pupil, target, timestamp: 0.0 })
            .collect();
        let Ok(model) = calibrate(&pairs, degree) else { return Ok(()); };
        let q = Point2::new((p.x + delta.x).clamp(0.0, 1.0), (p.y + delta.y).clamp(0.0, 1.0));
        let datum = |at: Point2| PupilDatum { ellipse: Ellipse::circle(at, 1.0), norm_pos: at, confidence: 1.0, timestamp: 0.0 };
        let (gp, gq) = (map_gaze(&datum(p), &model), map_gaze(&datum(q), &model));
        let bound = model.lipschitz_bound() * p.distance(q);
        prop_assert!(gp.norm_pos.distance(gq.norm_pos) <= bound * (1.0 + 1e-9) + 1e-12);
        prop_assert_eq!(gp.timestamp, 0.0);
    }

    #[test]
    fn pairing_matches_exhaustive_search(a in sorted_times(80), b in sorted_times(80), gap in prop::option::of(0.0..0.5f64)) {
        let gap = gap.unwrap_or(f64::INFINITY);
        prop_assert_eq!(pair_by_time(&a, &b, gap), common::brute_force_pairs(&a, &b, gap));
    }

    #[test]
    fn gaze_csv_is_a_fixpoint(rows in prop::collection::vec(
        (-1e6..1e6f64, -1e3..1e3f64, 0.0..1.0f64, 0.0..1.0f64, 0.0..1e5f64, 0.0..=1.0f64), 0..100,
    )) {
        let rows: Vec<RecordRow> = rows
            .into_iter()
            .map(|(gaze_x, gaze_y, pupil_x, pupil_y, timestamp, confidence)| RecordRow {
                gaze_x, gaze_y, pupil_x, pupil_y, timestamp, confidence,
            })
            .collect();
        let mut first = Vec::new();
        write_gaze_csv(&mut first, &rows).unwrap();
        let back = read_gaze_csv(first.as_slice(), std::path::Path::new("mem.csv")).unwrap();
        prop_assert_eq!(back.len(), rows.len());
        let mut second = Vec::new();
        write_gaze_csv(&mut second, &back).unwrap();
        prop_assert_eq!(first, second);
    }

    #[test]
    fn bus_delivers_in_order_and_counts_drops(
        capacity in 1usize..64,
        topics in prop::collection::vec(0usize..4, 0..300),
    ) {
        let bus = Bus::with_capacity(capacity);
        let all = bus.subscribe("");
        let gaze = bus.subscribe("gaze");
        for &t in &topics {
            bus.publish(Topic::ALL[t], serde_json::json!({}));
        }
        bus.close();
        let received: Vec<_> = std::iter::from_fn(|| all.try_recv()).collect();
        prop_assert_eq!(received.len() as u64 + all.dropped(), topics.len() as u64);
        for topic in Topic::ALL {
            let seqs: Vec<u64> = received.iter().filter(|m| m.topic == topic).map(|m| m.seq).collect();
            prop_assert!(seqs.windows(2).all(|w| w[0] < w[1]));
        }
        let only_gaze: Vec<_> = std::iter::from_fn(|| gaze.try_recv()).collect();
        prop_assert!(only_gaze.iter().all(|m| m.topic == Topic::Gaze));
        let sent_gaze = topics.iter().filter(|&&t| Topic::ALL[t] == Topic::Gaze).count() as u64;
        prop_assert_eq!(only_gaze.len() as u64 + gaze.dropped(), sent_gaze);
    }
}

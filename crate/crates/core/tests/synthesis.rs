//! Synthetic renders and sessions checked against their own ground truth.

use gazelab::detect::detect;
use gazelab::gaze::{detect_concentric_marker, screen_marker_session, MarkerKind, SessionGating};
use gazelab::image::load_pgm;
use gazelab::surface::{detect_markers, locate_surface, Homography};
use gazelab::synth::benchmark::read_truth_csv;
use gazelab::synth::{
    generate_benchmark, nine_point_sites, render_eye_frame, render_scene_frame, simulate_session, BenchmarkSpec,
    ConcentricMarker, EyeRig, EyeSceneRig, PlacedSurface, Protocol, PupilTrajectory, SceneContent, SceneRig,
};
use gazelab::{DetectorParams, Ellipse, Point2, StreamId};

#[test]
fn nine_point_script_markers_are_found_where_drawn() {
    let rig = SceneRig {
        noise_sd: 2.0,
        ..Default::default()
    };
    for (k, site) in nine_point_sites().into_iter().enumerate() {
        let center = Point2::new(site.x * rig.width as f64, site.y * rig.height as f64);
        let content = SceneContent {
            marker: Some(ConcentricMarker {
                center,
                radius: 40.0,
                kind: MarkerKind::Collect,
            }),
            surfaces: Vec::new(),
        };
        let frame = render_scene_frame(&rig, &content, k as f64);
        let found = detect_concentric_marker(&frame).expect("marker visible");
        assert_eq!(found.kind, MarkerKind::Collect);
        assert!(found.center.distance(center) < 0.5, "site {k}: {:?} vs {center:?}", found.center);
    }
}

fn normalized(h: &Homography) -> [f64; 9] {
    let flat: Vec<f64> = h.m.iter().flatten().copied().collect();
    let norm = flat.iter().map(|v| v * v).sum::<f64>().sqrt() * flat[8].signum();
    std::array::from_fn(|k| flat[k] / norm)
}

#[test]
fn surface_pose_is_recovered_from_its_fiducials() {
    let rig = SceneRig::default();
    let (w, h) = (rig.width as f64, rig.height as f64);
    let poses = [
        [[520.0, 40.0, 380.0], [-30.0, 480.0, 150.0], [0.0, 0.0, 1.0]],
        [[600.0, -80.0, 300.0], [60.0, 420.0, 120.0], [0.15, -0.1, 1.0]],
        [[450.0, 100.0, 420.0], [-90.0, 380.0, 200.0], [-0.12, 0.08, 1.0]],
    ];
    for m in poses {
        let to_scene = Homography::from_matrix(m).unwrap();
        let placed = PlacedSurface::with_corner_markers("desk", [3, 17, 29, 42], 0.2, 0.05, to_scene);
        let content = SceneContent {
            marker: None,
            surfaces: vec![placed.clone()],
        };
        let frame = render_scene_frame(&rig, &content, 0.0);
        let markers = detect_markers(&frame);
        assert_eq!(markers.iter().map(|m| m.id).collect::<Vec<_>>(), vec![3, 17, 29, 42]);
        let loc = locate_surface(&placed.definition(), &markers, rig.width, rig.height).unwrap();
        let to_pixels = Homography::from_matrix([[w, 0.0, 0.0], [0.0, h, 0.0], [0.0, 0.0, 1.0]]).unwrap();
        let truth = to_pixels.inverse().unwrap().compose(&to_scene).unwrap().inverse().unwrap();
        let (got, want) = (normalized(&loc.to_surface), normalized(&truth));
        let err = got.iter().zip(&want).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        assert!(err < 1e-3, "relative matrix error {err}");
    }
}

#[test]
fn blank_scene_has_no_detections() {
    let rig = SceneRig {
        noise_sd: 3.0,
        ..Default::default()
    };
    let frame = render_scene_frame(&rig, &SceneContent::default(), 0.0);
    assert!(detect_markers(&frame).is_empty());
    assert!(detect_concentric_marker(&frame).is_none());
}

#[test]
fn noiseless_session_gives_nine_exact_clusters() {
    let rig = EyeSceneRig::default();
    let s = simulate_session(&rig, Protocol::Calibration);
    let sites = nine_point_sites();
    let pairs = screen_marker_session(&sites, &s.pupil, &s.markers, &SessionGating::default()).unwrap();
    for site in &sites {
        let cluster: Vec<_> = pairs.iter().filter(|p| p.target.distance(*site) < 0.05).collect();
        assert!(!cluster.is_empty(), "site {site:?} has no pairs");
        let n = cluster.len() as f64;
        let c = Point2::new(
            cluster.iter().map(|p| p.target.x).sum::<f64>() / n,
            cluster.iter().map(|p| p.target.y).sum::<f64>() / n,
        );
        assert!(c.distance(*site) < 1e-6, "{c:?} vs {site:?}");
    }
    assert!(pairs.iter().all(|p| sites.iter().any(|s| p.target.distance(*s) < 0.05)));
}

#[test]
fn blink_removes_its_frames_from_one_site() {
    let base = EyeSceneRig::default();
    let site = 3;
    let (start, len) = (site as f64 * base.dwell + 0.6, 0.2);
    let mut blinking = base.clone();
    blinking.subject.scripted_blinks = vec![(start, len)];
    let sites = nine_point_sites();
    let count = |rig: &EyeSceneRig| {
        let s = simulate_session(rig, Protocol::Calibration);
        let pairs = screen_marker_session(&sites, &s.pupil, &s.markers, &SessionGating::default()).unwrap();
        let per_site: Vec<usize> = sites
            .iter()
            .map(|t| pairs.iter().filter(|p| p.target.distance(*t) < 0.05).count())
            .collect();
        per_site
    };
    let (before, after) = (count(&base), count(&blinking));
    let expected = len * base.eye_rate;
    let lost = before[site] as f64 - after[site] as f64;
    assert!((lost - expected).abs() <= 1.0, "lost {lost}, expected {expected}");
    for k in (0..sites.len()).filter(|&k| k != site) {
        assert_eq!(before[k], after[k], "site {k}");
    }
}

#[test]
fn half_hidden_pupil_halves_confidence() {
    let params = DetectorParams::default();
    for (k, &(x, y, r)) in [(320.0, 240.0, 40.0), (300.0, 260.0, 35.0), (340.0, 230.0, 45.0)].iter().enumerate() {
        let rig = EyeRig {
            trajectory: PupilTrajectory::Fixed(Ellipse::circle(Point2::new(x, y), r)),
            occlusion: 0.5,
            noise_sd: 1.0,
            seed: k as u64,
            ..Default::default()
        };
        let d = detect(&render_eye_frame(&rig, 0.0).frame, &params).unwrap().expect("detected");
        assert!((0.3..=0.7).contains(&d.confidence), "confidence {}", d.confidence);
    }
}

#[test]
fn noiseless_eye_centre_is_recovered() {
    let params = DetectorParams::default();
    for &(x, y, a, ratio, theta) in &[
        (320.0, 240.0, 40.0, 1.0, 0.0),
        (250.5, 200.25, 30.0, 0.7, 0.4),
        (400.0, 290.0, 45.0, 0.85, 2.0),
        (310.3, 250.8, 25.0, 0.6, 1.2),
    ] {
        let rig = EyeRig {
            trajectory: PupilTrajectory::Fixed(Ellipse::new(Point2::new(x, y), a, a * ratio, theta)),
            ..Default::default()
        };
        let r = render_eye_frame(&rig, 0.0);
        let d = detect(&r.frame, &params).unwrap().expect("detected");
        assert!(d.ellipse.center.distance(r.truth.center) < 1.0, "{:?} vs {:?}", d.ellipse.center, r.truth.center);
    }
}

#[test]
fn benchmark_is_complete_and_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let spec = BenchmarkSpec::default();
    let rows = generate_benchmark(&a, &spec).unwrap();
    generate_benchmark(&b, &spec).unwrap();
    assert_eq!(rows.len(), 500);
    let frames: Vec<_> = std::fs::read_dir(a.join("frames")).unwrap().collect();
    assert_eq!(frames.len(), 500);
    for name in ["truth.csv", "rig.json"] {
        assert_eq!(std::fs::read(a.join(name)).unwrap(), std::fs::read(b.join(name)).unwrap(), "{name}");
    }
    for i in 0..500 {
        let f = format!("frames/{i:06}.pgm");
        assert_eq!(std::fs::read(a.join(&f)).unwrap(), std::fs::read(b.join(&f)).unwrap(), "{f}");
    }

    let text = std::fs::read(a.join("truth.csv")).unwrap();
    let truth = read_truth_csv(text.as_slice()).unwrap();
    assert_eq!(truth.len(), 500);
    for row in truth.iter().step_by(25) {
        let (rendered, again) = spec.render(row.index);
        assert!(again.ellipse.center.distance(row.ellipse.center) < 0.5);
        assert_eq!(again.tier, row.tier);
        let stored = load_pgm(&a.join(format!("frames/{:06}.pgm", row.index)), StreamId::Eye).unwrap();
        assert_eq!(stored.pixels(), rendered.frame.pixels());
    }
}

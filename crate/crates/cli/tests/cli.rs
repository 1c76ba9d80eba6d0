use std::io::{BufRead, BufReader};
use std::path::Path;
use std::process::{Command, Output, Stdio};

use gazelab::io::{NetSubscription, Topic};
use gazelab::surface::Homography;
use gazelab::Point2;
use serde_json::Value;

fn gazelab() -> Command {
    Command::new(env!("CARGO_BIN_EXE_gazelab"))
}

fn run(args: &[&str]) -> Output {
    gazelab().args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn json(args: &[&str]) -> Value {
    let mut a = args.to_vec();
    a.push("--json");
    serde_json::from_str(&ok(&a)).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn synth_then_detect_writes_one_row_per_frame() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().join("d");
    let p = dir.path().join("p.csv");
    ok(&["synth", "--frames", "12", "--seed", "7", "--out", s(&d)]);
    let report = json(&["detect", s(&d), "--out", s(&p), "--workers", "2"]);
    assert_eq!(report["frames"], 12);
    let text = std::fs::read_to_string(&p).unwrap();
    assert_eq!(text.lines().count(), 13);
    assert!(text.starts_with("timestamp,confidence,"));
}

#[test]
fn detect_output_does_not_depend_on_worker_count() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().join("d");
    ok(&["synth", "--frames", "9", "--seed", "3", "--out", s(&d)]);
    let one = dir.path().join("one.csv");
    let three = dir.path().join("three.csv");
    ok(&["detect", s(&d), "--out", s(&one), "--workers", "1"]);
    ok(&["detect", s(&d), "--out", s(&three), "--workers", "3"]);
    assert_eq!(std::fs::read(&one).unwrap(), std::fs::read(&three).unwrap());
}

#[test]
fn synth_is_byte_identical_for_equal_seeds() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        ok(&["synth", "--kind", "session", "--seed", "5", "--noise", "2", "--out", s(out)]);
    }
    for f in ["rig.json", "session.json", "pupil.csv"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn noiseless_session_evaluates_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let sdir = dir.path().join("s");
    ok(&["synth", "--kind", "session", "--seed", "11", "--out", s(&sdir)]);
    let report = json(&["evaluate", "--session", s(&sdir)]);
    assert!(report["accuracy"].as_f64().unwrap() < 0.05, "{report}");
    assert_eq!(report["precision"].as_f64().unwrap(), 0.0);
}

#[test]
fn calibrate_map_and_record_agree() {
    let dir = tempfile::tempdir().unwrap();
    let sdir = dir.path().join("s");
    let model = dir.path().join("model.json");
    let gaze = dir.path().join("gaze.csv");
    let rec = dir.path().join("rec");
    ok(&["synth", "--kind", "session", "--seed", "2", "--out", s(&sdir)]);
    let m = json(&["calibrate", "--session", s(&sdir), "--out", s(&model)]);
    assert!(m["rms_residual"].as_f64().unwrap() < 1e-9);
    ok(&["map", s(&sdir.join("pupil.csv")), "--model", s(&model), "--out", s(&gaze)]);
    ok(&["record", "--session", s(&sdir), "--out", s(&rec)]);
    assert_eq!(std::fs::read(&gaze).unwrap(), std::fs::read(rec.join("gaze.csv")).unwrap());
    assert!(rec.join("eye_timestamps.csv").exists());
    assert!(rec.join("scene_timestamps.csv").exists());
}

#[test]
fn calibrate_from_pairs_csv() {
    let dir = tempfile::tempdir().unwrap();
    let pairs = dir.path().join("pairs.csv");
    let mut text = String::from("pupil_x,pupil_y,target_x,target_y,timestamp\n");
    for i in 0..3 {
        for j in 0..3 {
            let (x, y) = (0.2 + 0.3 * i as f64, 0.2 + 0.3 * j as f64);
            text.push_str(&format!("{x},{y},{},{},0\n", 0.1 + 0.8 * x + 0.1 * x * y, 0.05 + 0.9 * y));
        }
    }
    std::fs::write(&pairs, text).unwrap();
    let out = dir.path().join("m.json");
    let m = json(&["calibrate", "--pairs", s(&pairs), "--degree", "2", "--out", s(&out)]);
    assert_eq!(m["degree"], 2);
    assert!(m["rms_residual"].as_f64().unwrap() < 1e-12);
}

#[test]
fn surface_poses_match_rendered_truth() {
    let dir = tempfile::tempdir().unwrap();
    let sf = dir.path().join("sf");
    let poses = dir.path().join("poses.csv");
    ok(&["synth", "--kind", "surface", "--frames", "4", "--seed", "1", "--out", s(&sf)]);
    let report = json(&["surface", s(&sf), "--definition", s(&sf.join("surface.json")), "--out", s(&poses)]);
    assert_eq!(report["located"], 4);
    let truth: Vec<Homography> = serde_json::from_str(&std::fs::read_to_string(sf.join("poses.json")).unwrap()).unwrap();
    let text = std::fs::read_to_string(&poses).unwrap();
    for (line, to_scene) in text.lines().skip(1).zip(&truth) {
        let v: Vec<f64> = line.split(',').skip(2).map(|x| x.parse().unwrap()).collect();
        let h = Homography::from_matrix([[v[0], v[1], v[2]], [v[3], v[4], v[5]], [v[6], v[7], v[8]]]).unwrap();
        for &(u, w) in &[(0.1, 0.1), (0.5, 0.5), (0.9, 0.3), (0.2, 0.8)] {
            let q = Point2::new(u, w);
            let px = to_scene.apply(q).unwrap();
            let back = h.apply(Point2::new(px.x / 1280.0, px.y / 720.0)).unwrap();
            assert!(back.distance(q) < 2e-3, "{q:?} -> {back:?}");
        }
    }
}

#[test]
fn latency_reports_both_lanes() {
    let r = json(&["latency", "--frames", "200"]);
    assert_eq!(r["eye"]["samples"], 200);
    let eye = r["eye"]["total_mean"].as_f64().unwrap();
    let scene = r["scene"]["total_mean"].as_f64().unwrap();
    assert!((eye - 0.045).abs() < 0.002 && (scene - 0.124).abs() < 0.002);
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let out = run(&["detect", "--frobnicate"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
    let out = run(&[]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn help_succeeds() {
    let text = ok(&["--help"]);
    for cmd in ["synth", "detect", "calibrate", "map", "surface", "evaluate", "benchmark", "latency", "record", "stream"] {
        assert!(text.contains(cmd), "{cmd} missing from help");
    }
}

#[test]
fn bad_data_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["evaluate", "--session", s(&dir.path().join("missing"))]);
    assert_eq!(out.status.code(), Some(2));
    let bad = dir.path().join("p.csv");
    std::fs::write(&bad, "timestamp,confidence,norm_x,norm_y,center_x,center_y,a,b,theta\n0,2,0,0,0,0,1,1,0\n").unwrap();
    let model = dir.path().join("m.json");
    std::fs::write(&model, r#"{"degree":1,"coeffs_x":[0,1,0],"coeffs_y":[0,0,1],"rms_residual":0}"#).unwrap();
    let out = run(&["map", s(&bad), "--model", s(&model), "--out", s(&dir.path().join("g.csv")), "--json"]);
    assert_eq!(out.status.code(), Some(2));
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["kind"], "data");
    assert!(err["error"].as_str().unwrap().contains("line 2"));
}

#[test]
fn stream_replays_a_recording_over_tcp() {
    let dir = tempfile::tempdir().unwrap();
    let sdir = dir.path().join("s");
    let rec = dir.path().join("rec");
    ok(&["synth", "--kind", "session", "--seed", "4", "--out", s(&sdir)]);
    ok(&["record", "--session", s(&sdir), "--out", s(&rec)]);
    let rows = std::fs::read_to_string(rec.join("gaze.csv")).unwrap().lines().count() - 1;

    let mut child = gazelab()
        .args(["stream", s(&rec), "--bind", "127.0.0.1:0", "--speed", "20", "--wait-for", "1"])
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    let mut first = String::new();
    BufReader::new(child.stdout.as_mut().unwrap()).read_line(&mut first).unwrap();
    let addr = first.trim().strip_prefix("listening on ").expect("address line").to_owned();
    let sub = NetSubscription::connect(addr.as_str(), "gaze").unwrap();
    let msgs: Vec<_> = sub.map(|m| m.unwrap()).collect();
    assert!(child.wait().unwrap().success());
    assert_eq!(msgs.len(), rows);
    assert!(msgs.iter().all(|m| m.topic == Topic::Gaze));
    assert!(msgs.windows(2).all(|w| w[1].seq == w[0].seq + 1));
}

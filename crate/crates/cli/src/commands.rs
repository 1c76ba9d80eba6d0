use std::f64::consts::TAU;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;
use std::thread;
use std::time::{Duration, Instant};

use anyhow::Context as _;
use gazelab::detect::{detect, no_pupil};
use gazelab::eval::{
    calibrate_session, ellipse_hausdorff, evaluate_session, detection_rate_curve, EvalSettings,
};
use gazelab::gaze::calibrate::{calibrate, map_gaze, read_pairs_csv, CalibrationModel};
use gazelab::image::{load_pgm, save_pgm};
use gazelab::io::{
    read_gaze_csv, read_pupil_csv, read_recording, serve, write_gaze_csv, write_pupil_csv, write_recording, Bus,
    RecordRow, Topic,
};
use gazelab::pipeline::{run_live, LiveConfig};
use gazelab::surface::{detect_markers, locate_surface, Homography, SurfaceDefinition};
use gazelab::synth::benchmark::read_truth_csv;
use gazelab::synth::{
    generate_benchmark, render_scene_frame, simulate_session, BenchmarkSpec, EyeSceneRig, PlacedSurface, Protocol,
    SceneContent, SceneRig, SessionStreams, SubjectModel, Tier,
};
use gazelab::timing::{nearest_index, simulate_pipeline, StageModel};
use gazelab::{DetectorParams, GazeDatum, GrayFrame, Point2, PupilDatum, StreamId};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::args::*;
use crate::dataset::*;
use crate::failure::{data, Classify, Failure};
use crate::Context;

pub fn dispatch(ctx: &Context, command: Command) -> Result<(), Failure> {
    match command {
        Command::Synth(a) => synth(ctx, a),
        Command::Detect(a) => detect_cmd(ctx, a),
        Command::Calibrate(a) => calibrate_cmd(ctx, a),
        Command::Map(a) => map_cmd(ctx, a),
        Command::Surface(a) => surface_cmd(ctx, a),
        Command::Evaluate(a) => evaluate_cmd(ctx, a),
        Command::Benchmark(a) => benchmark_cmd(ctx, a),
        Command::Latency(a) => latency_cmd(ctx, a),
        Command::Record(a) => record_cmd(ctx, a),
        Command::Stream(a) => stream_cmd(ctx, a),
    }
}

/// Prints `report` as JSON, or `table` otherwise.
fn emit<T: Serialize>(ctx: &Context, report: &T, table: impl FnOnce() -> String) -> Result<(), Failure> {
    let text = if ctx.json {
        serde_json::to_string_pretty(report).internal()? + "\n"
    } else {
        table()
    };
    let mut out = std::io::stdout().lock();
    out.write_all(text.as_bytes())
        .and_then(|_| out.flush())
        .context("cannot write to standard output")
        .internal()
}

fn detector_params(ctx: &Context) -> Result<DetectorParams, Failure> {
    let p = ctx.config.detector.clone();
    p.validate().data()?;
    Ok(p)
}

fn pool(workers: &WorkerArgs) -> Result<rayon::ThreadPool, Failure> {
    let n = match workers.workers {
        Some(0) => return Err(data("--workers must be at least 1")),
        Some(n) => n,
        None => thread::available_parallelism().map_or(1, |n| n.get()),
    };
    rayon::ThreadPoolBuilder::new().num_threads(n).build().internal()
}

/// Loads and detects every frame in parallel, keeping frame order.
fn detect_frames(
    pool: &rayon::ThreadPool,
    paths: &[std::path::PathBuf],
    timestamps: &[f64],
    params: &DetectorParams,
) -> Result<Vec<(PupilDatum, bool)>, Failure> {
    pool.install(|| {
        paths
            .par_iter()
            .zip(timestamps)
            .map(|(path, &t)| {
                let mut frame: GrayFrame = load_pgm(path, StreamId::Eye)
                    .with_context(|| format!("cannot read {}", path.display()))
                    .data()?;
                frame.timestamp = t;
                let found = detect(&frame, params)
                    .with_context(|| format!("cannot process {}", path.display()))
                    .data()?;
                Ok(match found {
                    Some(d) => (d, true),
                    None => (no_pupil(&frame), false),
                })
            })
            .collect()
    })
}

fn synth(ctx: &Context, a: SynthArgs) -> Result<(), Failure> {
    if !(a.noise.is_finite() && a.noise >= 0.0) {
        return Err(data(format!("--noise must be a non-negative number, got {}", a.noise)));
    }
    if a.frames == Some(0) {
        return Err(data("--frames must be at least 1"));
    }
    std::fs::create_dir_all(&a.out)
        .with_context(|| format!("cannot create {}", a.out.display()))
        .data()?;
    let report = match a.kind {
        SynthKind::Benchmark => {
            let spec = BenchmarkSpec {
                frames: a.frames.unwrap_or(500),
                seed: a.seed,
                ..Default::default()
            };
            generate_benchmark(&a.out, &spec)
                .with_context(|| format!("cannot write benchmark to {}", a.out.display()))
                .data()?;
            let ts: Vec<f64> = (0..spec.frames).map(|k| k as f64 / DEFAULT_RATE).collect();
            write_timestamps(&a.out, StreamId::Eye, &ts)?;
            json!({ "kind": "benchmark", "frames": spec.frames, "seed": a.seed })
        }
        SynthKind::Session => {
            let rig = EyeSceneRig {
                subject: SubjectModel {
                    pupil_noise_sd: a.noise,
                    ..Default::default()
                },
                seed: a.seed,
                ..Default::default()
            };
            let streams = simulate_session(&rig, Protocol::Full);
            write_json(&a.out.join(RIG_FILE), &rig)?;
            write_json(&a.out.join(SESSION_FILE), &streams)?;
            let mut w = create(&a.out.join(PUPIL_FILE))?;
            write_pupil_csv(&mut w, &streams.pupil)
                .and_then(|_| w.flush())
                .context("cannot write pupil CSV")
                .data()?;
            json!({
                "kind": "session",
                "seed": a.seed,
                "duration": streams.duration,
                "pupil_samples": streams.pupil.len(),
                "marker_sightings": streams.markers.len(),
            })
        }
        SynthKind::Surface => synth_surface(&a.out, a.frames.unwrap_or(60), a.seed)?,
    };
    emit(ctx, &report, || format!("wrote {} to {}\n", report, a.out.display()))
}

/// Pose of the synthetic surface in frame `k` of `n`: a square half the
/// frame high that sways and tilts.
fn surface_pose(rig: &SceneRig, k: usize, n: usize) -> Result<Homography, Failure> {
    let (w, h) = (rig.width as f64, rig.height as f64);
    let phase = TAU * k as f64 / n.max(1) as f64;
    let s = 0.5 * h;
    let tilt = 0.15 * phase.sin();
    let m = [
        [s * (1.0 + tilt), 0.05 * s * phase.cos(), 0.5 * (w - s) + 0.08 * w * phase.sin()],
        [-0.03 * s * phase.sin(), s, 0.25 * h + 0.05 * h * phase.cos()],
        [tilt, 0.1 * phase.cos(), 1.0],
    ];
    Homography::from_matrix(m).internal()
}

fn synth_surface(out: &Path, frames: usize, seed: u64) -> Result<serde_json::Value, Failure> {
    let rig = SceneRig {
        noise_sd: 2.0,
        seed,
        ..Default::default()
    };
    let dir = out.join(FRAMES_DIR);
    std::fs::create_dir_all(&dir)
        .with_context(|| format!("cannot create {}", dir.display()))
        .data()?;
    let mut poses = Vec::with_capacity(frames);
    let mut ts = Vec::with_capacity(frames);
    let mut definition = None;
    for k in 0..frames {
        let t = k as f64 / DEFAULT_RATE;
        let placed = PlacedSurface::with_corner_markers("desk", [3, 17, 29, 42], 0.2, 0.05, surface_pose(&rig, k, frames)?);
        definition.get_or_insert_with(|| placed.definition());
        let content = SceneContent {
            marker: None,
            surfaces: vec![placed.clone()],
        };
        let frame = render_scene_frame(&rig, &content, t);
        let path = dir.join(format!("{k:06}.pgm"));
        save_pgm(&path, &frame)
            .with_context(|| format!("cannot write {}", path.display()))
            .data()?;
        poses.push(placed.to_scene);
        ts.push(t);
    }
    write_json(&out.join(SURFACE_FILE), &definition)?;
    write_json(&out.join(POSES_FILE), &poses)?;
    write_json(&out.join(RIG_FILE), &rig)?;
    write_timestamps(out, StreamId::Scene, &ts)?;
    Ok(json!({ "kind": "surface", "frames": frames, "seed": seed }))
}

#[derive(Serialize)]
struct DetectReport {
    frames: usize,
    detected: usize,
    seconds: f64,
    frames_per_second: f64,
}

fn detect_cmd(ctx: &Context, a: DetectArgs) -> Result<(), Failure> {
    let params = detector_params(ctx)?;
    let paths = frame_paths(&a.dataset)?;
    let ts = frame_timestamps(&a.dataset, StreamId::Eye, paths.len())?;
    prepare_output(&a.out)?;
    let pool = pool(&a.workers)?;
    ctx.log(|| format!("detecting {} frames on {} workers", paths.len(), pool.current_num_threads()));
    let start = Instant::now();
    let results = detect_frames(&pool, &paths, &ts, &params)?;
    let seconds = start.elapsed().as_secs_f64();
    let data: Vec<PupilDatum> = results.iter().map(|r| r.0).collect();
    let mut w = create(&a.out)?;
    write_pupil_csv(&mut w, &data)
        .and_then(|_| w.flush())
        .with_context(|| format!("cannot write {}", a.out.display()))
        .data()?;
    let report = DetectReport {
        frames: data.len(),
        detected: results.iter().filter(|r| r.1).count(),
        seconds,
        frames_per_second: data.len() as f64 / seconds,
    };
    emit(ctx, &report, || {
        format!(
            "{} frames, {} detected, {:.1} frames/s\n",
            report.frames, report.detected, report.frames_per_second
        )
    })
}

fn load_session(dir: &Path) -> Result<(EyeSceneRig, SessionStreams), Failure> {
    require_dir(dir)?;
    let rig: EyeSceneRig = read_json(&dir.join(RIG_FILE))?;
    let streams: SessionStreams = read_json(&dir.join(SESSION_FILE))?;
    Ok((rig, streams))
}

fn settings(ctx: &Context, degree: Option<usize>) -> Result<EvalSettings, Failure> {
    let degree = degree.unwrap_or(ctx.config.calibration_degree);
    if degree == 0 {
        return Err(data("calibration degree must be at least 1"));
    }
    Ok(EvalSettings {
        degree,
        ..Default::default()
    })
}

fn calibrate_cmd(ctx: &Context, a: CalibrateArgs) -> Result<(), Failure> {
    let settings = settings(ctx, a.degree)?;
    let model = match (&a.pairs, &a.session) {
        (Some(p), None) => {
            let pairs = read_pairs_csv(open(p)?)
                .with_context(|| format!("cannot read {}", p.display()))
                .data()?;
            calibrate(&pairs, settings.degree).data()?
        }
        (None, Some(s)) => {
            let (rig, streams) = load_session(s)?;
            calibrate_session(&rig, &streams, &settings).data()?
        }
        _ => return Err(Failure::Internal(anyhow::anyhow!("argument parser admitted both inputs"))),
    };
    prepare_output(&a.out)?;
    write_json(&a.out, &model)?;
    emit(ctx, &model, || {
        format!(
            "degree {} model, rms residual {:.3e}, written to {}\n",
            model.degree,
            model.rms_residual,
            a.out.display()
        )
    })
}

fn map_cmd(ctx: &Context, a: MapArgs) -> Result<(), Failure> {
    let model: CalibrationModel = read_json(&a.model)?;
    model.validate().data()?;
    let pupil = read_pupil_csv(open(&a.pupil)?, &a.pupil).data()?;
    prepare_output(&a.out)?;
    let rows: Vec<RecordRow> = pupil.iter().map(|p| RecordRow::from_gaze(&map_gaze(p, &model))).collect();
    let mut w = create(&a.out)?;
    write_gaze_csv(&mut w, &rows).data()?;
    w.flush()
        .with_context(|| format!("cannot write {}", a.out.display()))
        .data()?;
    let report = json!({ "rows": rows.len() });
    emit(ctx, &report, || format!("mapped {} samples to {}\n", rows.len(), a.out.display()))
}

/// Full-precision shortest round-trip formatting.
fn num(v: f64) -> String {
    format!("{v}")
}

fn surface_cmd(ctx: &Context, a: SurfaceArgs) -> Result<(), Failure> {
    let def: SurfaceDefinition = read_json(&a.definition)?;
    def.validate().data()?;
    let paths = frame_paths(&a.scene)?;
    let ts = frame_timestamps(&a.scene, StreamId::Scene, paths.len())?;
    let gaze = match &a.gaze {
        Some(g) => Some(read_gaze_csv(open(g)?, g).data()?),
        None => None,
    };
    prepare_output(&a.out)?;
    if let Some(g) = &a.gaze_out {
        prepare_output(g)?;
    }

    let mut poses: Vec<Option<Homography>> = Vec::with_capacity(paths.len());
    let mut csv = String::from("timestamp,markers,h00,h01,h02,h10,h11,h12,h20,h21,h22\n");
    for (path, &t) in paths.iter().zip(&ts) {
        let frame = load_pgm(path, StreamId::Scene)
            .with_context(|| format!("cannot read {}", path.display()))
            .data()?;
        let markers = detect_markers(&frame);
        let located = locate_surface(&def, &markers, frame.width(), frame.height()).ok();
        let _ = write!(csv, "{}", num(t));
        match &located {
            Some(loc) => {
                let _ = write!(csv, ",{}", loc.markers_used.len());
                for row in &loc.to_surface.m {
                    for v in row {
                        let _ = write!(csv, ",{}", num(*v));
                    }
                }
            }
            None => csv.push_str(",0,,,,,,,,,"),
        }
        csv.push('\n');
        poses.push(located.map(|l| l.to_surface));
    }
    std::fs::write(&a.out, &csv)
        .with_context(|| format!("cannot write {}", a.out.display()))
        .data()?;
    let located = poses.iter().filter(|p| p.is_some()).count();

    let mut mapped = 0usize;
    let mut on_surface = 0usize;
    if let (Some(rows), Some(out)) = (&gaze, &a.gaze_out) {
        let mut csv = String::from("timestamp,surface_x,surface_y,on_surface\n");
        for r in rows {
            let Some(k) = nearest_index(&ts, r.timestamp) else {
                continue;
            };
            let Some(h) = &poses[k] else {
                continue;
            };
            let Ok(p) = h.apply(Point2::new(r.gaze_x, r.gaze_y)) else {
                continue;
            };
            let inside = (0.0..=1.0).contains(&p.x) && (0.0..=1.0).contains(&p.y);
            mapped += 1;
            on_surface += inside as usize;
            let _ = writeln!(csv, "{},{},{},{}", num(r.timestamp), num(p.x), num(p.y), inside as u8);
        }
        std::fs::write(out, &csv)
            .with_context(|| format!("cannot write {}", out.display()))
            .data()?;
    }
    let report = json!({
        "frames": paths.len(),
        "located": located,
        "gaze_mapped": mapped,
        "gaze_on_surface": on_surface,
    });
    emit(ctx, &report, || {
        let mut s = format!("surface `{}` located in {located} of {} frames\n", def.name, paths.len());
        if gaze.is_some() {
            let _ = writeln!(s, "{mapped} gaze samples mapped, {on_surface} on the surface");
        }
        s
    })
}

fn evaluate_cmd(ctx: &Context, a: EvaluateArgs) -> Result<(), Failure> {
    let (rig, streams) = load_session(&a.session)?;
    let report = evaluate_session(&rig, &streams, &settings(ctx, None)?).data()?;
    emit(ctx, &report, || report.to_table())
}

#[derive(Serialize)]
struct TierRate {
    tier: Tier,
    frames: usize,
    rate_2px: f64,
    rate_5px: f64,
}

#[derive(Serialize)]
struct BenchmarkReport {
    frames: usize,
    rate_2px: f64,
    rate_5px: f64,
    tiers: Vec<TierRate>,
    seconds: f64,
    frames_per_second: f64,
    curve: gazelab::eval::DetectionRateCurve,
}

fn benchmark_cmd(ctx: &Context, a: BenchmarkArgs) -> Result<(), Failure> {
    let params = detector_params(ctx)?;
    let paths = frame_paths(&a.dataset)?;
    let truth_path = a.dataset.join(TRUTH_FILE);
    let truth = read_truth_csv(open(&truth_path)?)
        .with_context(|| format!("cannot read {}", truth_path.display()))
        .data()?;
    if truth.len() != paths.len() {
        return Err(data(format!("{} truth rows for {} frames", truth.len(), paths.len())));
    }
    if let Some(c) = &a.curve {
        prepare_output(c)?;
    }
    let ts = frame_timestamps(&a.dataset, StreamId::Eye, paths.len())?;
    let pool = pool(&a.workers)?;
    let start = Instant::now();
    let results = detect_frames(&pool, &paths, &ts, &params)?;
    let seconds = start.elapsed().as_secs_f64();
    let errors: Vec<Option<f64>> = results
        .iter()
        .zip(&truth)
        .map(|((d, found), t)| found.then(|| ellipse_hausdorff(&d.ellipse, &t.ellipse)))
        .collect();
    let thresholds: Vec<f64> = (1..=20).map(|k| 0.5 * k as f64).collect();
    let curve = detection_rate_curve(&errors, &thresholds);
    let tiers = Tier::ALL
        .into_iter()
        .map(|tier| {
            let e: Vec<Option<f64>> = errors
                .iter()
                .zip(&truth)
                .filter(|(_, t)| t.tier == tier)
                .map(|(e, _)| *e)
                .collect();
            let c = detection_rate_curve(&e, &[2.0, 5.0]);
            TierRate {
                tier,
                frames: e.len(),
                rate_2px: c.rates[0],
                rate_5px: c.rates[1],
            }
        })
        .collect();
    if let Some(c) = &a.curve {
        std::fs::write(c, curve.to_csv())
            .with_context(|| format!("cannot write {}", c.display()))
            .data()?;
    }
    let report = BenchmarkReport {
        frames: paths.len(),
        rate_2px: curve.rate_at(2.0),
        rate_5px: curve.rate_at(5.0),
        tiers,
        seconds,
        frames_per_second: paths.len() as f64 / seconds,
        curve,
    };
    emit(ctx, &report, || {
        let mut s = format!(
            "{} frames in {:.2} s ({:.1} frames/s)\ndetection rate {:.3} at 2 px, {:.3} at 5 px\n",
            report.frames, report.seconds, report.frames_per_second, report.rate_2px, report.rate_5px
        );
        for t in &report.tiers {
            let _ = writeln!(
                s,
                "  {:<15} {:>4} frames  {:.3} at 2 px  {:.3} at 5 px",
                t.tier.as_str(),
                t.frames,
                t.rate_2px,
                t.rate_5px
            );
        }
        s
    })
}

fn latency_cmd(ctx: &Context, a: LatencyArgs) -> Result<(), Failure> {
    if a.frames < 2 {
        return Err(data("--frames must be at least 2"));
    }
    match a.mode {
        LatencyMode::Simulated => {
            let eye = simulate_pipeline("eye", &StageModel::nominal_eye(), a.frames, a.seed).internal()?;
            let scene =
                simulate_pipeline("scene", &StageModel::nominal_scene(), a.frames, a.seed.wrapping_add(1)).internal()?;
            let report = json!({ "mode": "simulated", "eye": eye, "scene": scene });
            emit(ctx, &report, || format!("{}\n{}", eye.to_table(), scene.to_table()))
        }
        LatencyMode::Live => {
            let cfg = LiveConfig {
                eye_frames: a.frames,
                paced: !a.unpaced,
                params: detector_params(ctx)?,
                ..Default::default()
            };
            ctx.log(|| format!("running {} eye frames", cfg.eye_frames));
            let r = run_live(&cfg, &Bus::new()).internal()?;
            let report = json!({
                "mode": "live",
                "paced": cfg.paced,
                "eye": r.eye,
                "scene": r.scene,
                "eye_frames_per_second": r.eye_throughput(),
                "detection_fraction": r.detection_fraction(),
                "recency_violations": r.recency_violations(),
            });
            emit(ctx, &report, || {
                let mut s = r.eye.to_table();
                if let Some(scene) = &r.scene {
                    s.push('\n');
                    s.push_str(&scene.to_table());
                }
                let _ = writeln!(
                    s,
                    "\neye throughput {:.1} frames/s, detected {:.1}%, recency violations {}",
                    r.eye_throughput(),
                    100.0 * r.detection_fraction(),
                    r.recency_violations()
                );
                s
            })
        }
    }
}

fn record_cmd(ctx: &Context, a: RecordArgs) -> Result<(), Failure> {
    let (rig, streams) = load_session(&a.session)?;
    let model = calibrate_session(&rig, &streams, &settings(ctx, None)?).data()?;
    let gaze: Vec<GazeDatum> = streams.pupil.iter().map(|p| map_gaze(p, &model)).collect();
    let stamps = [
        (StreamId::Eye, streams.pupil.iter().map(|p| p.timestamp).collect()),
        (StreamId::Scene, streams.markers.iter().map(|m| m.timestamp).collect()),
    ];
    let rows = write_recording(&a.out, gaze.iter().map(RecordRow::from_gaze), &stamps).data()?;
    let report = json!({ "rows": rows, "model": model });
    emit(ctx, &report, || format!("recorded {rows} gaze samples to {}\n", a.out.display()))
}

fn stream_cmd(ctx: &Context, a: StreamArgs) -> Result<(), Failure> {
    if !(a.speed.is_finite() && a.speed >= 0.0) {
        return Err(data(format!("--speed must be a non-negative number, got {}", a.speed)));
    }
    require_dir(&a.recording)?;
    let rows = read_recording(&a.recording).data()?;
    let bus = Bus::new();
    let server = serve(bus.clone(), a.bind.as_str())
        .with_context(|| format!("cannot listen on {}", a.bind))
        .data()?;
    {
        let mut out = std::io::stdout().lock();
        writeln!(out, "listening on {}", server.local_addr())
            .and_then(|_| out.flush())
            .internal()?;
    }
    while bus.subscriber_count() < a.wait_for {
        thread::sleep(Duration::from_millis(5));
    }
    let start = Instant::now();
    let t0 = rows.first().map_or(0.0, |r| r.timestamp);
    for r in &rows {
        if a.speed > 0.0 {
            let due = start + Duration::from_secs_f64(((r.timestamp - t0) / a.speed).max(0.0));
            if let Some(wait) = due.checked_duration_since(Instant::now()) {
                thread::sleep(wait);
            }
        }
        bus.publish_datum(Topic::Gaze, r).internal()?;
    }
    let seconds = start.elapsed().as_secs_f64();
    bus.close();
    // let connected clients drain their queues before the server stops
    let deadline = Instant::now() + Duration::from_secs(10);
    while bus.subscriber_count() > 0 && Instant::now() < deadline {
        thread::sleep(Duration::from_millis(5));
    }
    server.shutdown();
    let report = json!({ "published": rows.len(), "seconds": seconds });
    emit(ctx, &report, || format!("published {} gaze samples in {seconds:.2} s\n", rows.len()))
}

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use geolayout::io::{read_json, read_layout, read_params, write_params};
use geolayout::{DatasetRecord, ParamMap};
use serde_json::Value;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_geolayout")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> Value {
    let out = run(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("stdout is one JSON object")
}

fn failure(args: &[&str]) -> (i32, Value) {
    let out = run(args);
    let err = serde_json::from_slice(&out.stderr).expect("stderr is one JSON object");
    (out.status.code().unwrap(), err)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn synth_pipeline_eval_chain() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    ok(&["synth", "--count", "3", "--seed", "10", "--resolution", "64x48", "--out", s(&data)]);
    let mut preds = Vec::new();
    let mut gts = Vec::new();
    for seed in 10..13 {
        let rec = data.join(format!("scene_{seed:06}"));
        let lay = dir.path().join(format!("layout_{seed}"));
        let summary = ok(&["pipeline", "--record", s(&rec), "--out", s(&lay)]);
        let gt = DatasetRecord::read(&rec).unwrap();
        assert_eq!(summary["instances"].as_u64().unwrap() as usize, gt.surfaces.len());
        assert!(summary["e_pix"].as_f64().unwrap() < 1.0);
        for f in ["layout.json", "seg.png", "clustered_seg.png", "depth.glr", "cloud.ply", "report.json"] {
            assert!(lay.join(f).is_file(), "{f}");
        }
        preds.push(lay.to_str().unwrap().to_string());
        gts.push(rec.to_str().unwrap().to_string());
    }
    let ev = dir.path().join("eval");
    let mut args = vec!["eval", "--out", s(&ev), "--pred"];
    args.extend(preds.iter().map(String::as_str));
    args.push("--gt");
    args.extend(gts.iter().map(String::as_str));
    let agg = ok(&args);
    assert_eq!(agg["images"], 3);
    let report: Value = read_json(&ev.join("report.json")).unwrap();
    let per_image: Vec<f64> =
        report["reports"].as_array().unwrap().iter().map(|r| r["e_pix"].as_f64().unwrap()).collect();
    assert!((agg["e_pix"].as_f64().unwrap() - per_image.iter().sum::<f64>() / 3.0).abs() < 1e-12);
    let csv = fs::read_to_string(ev.join("report.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
}

#[test]
fn exact_params_give_exact_layout() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["synth", "--seed", "4", "--resolution", "64x48", "--out", s(dir.path())]);
    let rec = dir.path().join("scene_000004");
    let lay = dir.path().join("lay");
    ok(&["pipeline", "--params", s(&rec.join("params.glr")), "--out", s(&lay)]);
    let gt = DatasetRecord::read(&rec).unwrap();
    let files = read_layout(&lay).unwrap();
    let e = geolayout::pixel_error(&files.seg, &gt.seg).unwrap();
    assert_eq!(e, 0.0);
    // Without a record there is no camera and hence no point cloud.
    assert!(!lay.join("cloud.ply").exists());
}

#[test]
fn cluster_stitch_corners_chain() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["synth", "--seed", "2", "--resolution", "64x48", "--out", s(dir.path())]);
    let rec = dir.path().join("scene_000002");
    let out = dir.path().join("work");
    let c = ok(&["cluster", "--params", s(&rec.join("params.glr")), "--out", s(&out)]);
    let gt = DatasetRecord::read(&rec).unwrap();
    assert_eq!(c["instances"].as_u64().unwrap() as usize, gt.surfaces.len());
    let inst = out.join("instances.json");
    ok(&["stitch", "--instances", s(&inst), "--resolution", "64x48", "--out", s(&out)]);
    let seg = geolayout::io::read_seg(&out.join("seg.png")).unwrap();
    assert_eq!(geolayout::pixel_error(&seg, &gt.seg).unwrap(), 0.0);
    let corners = ok(&["corners", "--instances", s(&inst), "--seg", s(&out.join("seg.png")), "--out", s(&out)]);
    assert_eq!(corners["corners"].as_u64().unwrap() as usize, gt.corners.len());
    let set: Value = read_json(&out.join("corners.json")).unwrap();
    assert_eq!(set["corners"].as_array().unwrap().len(), gt.corners.len());
}

#[test]
fn fit_recovers_annotated_surfaces() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["synth", "--seed", "7", "--resolution", "64x48", "--out", s(dir.path())]);
    let rec = dir.path().join("scene_000007");
    ok(&["fit", "--record", s(&rec), "--out", s(dir.path())]);
    let fits: Vec<geolayout::FitResult> = read_json(&dir.path().join("fits.json")).unwrap();
    let gt = DatasetRecord::read(&rec).unwrap();
    assert_eq!(fits.len(), gt.annotations.len());
    for f in &fits {
        let want = gt.surfaces.iter().find(|s| Some(s.id) == f.region).unwrap().params.to_array();
        let got = f.params.to_array();
        assert!((0..4).all(|k| (got[k] - want[k]).abs() < 1e-6), "{got:?} vs {want:?}");
    }
}

#[test]
fn outputs_are_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        ok(&["synth", "--count", "2", "--walls", "5", "--seed", "3", "--resolution", "48x36", "--out", s(d.path())]);
        ok(&[
            "train-toy",
            "--mode",
            "2d",
            "--steps",
            "5",
            "--seed",
            "3",
            "--resolution",
            "48x36",
            "--out",
            s(&d.path().join("toy")),
        ]);
    }
    for f in
        ["scene_000003/meta.json", "scene_000004/depth.glr", "scene_000004/seg.png", "toy/trace.csv", "toy/params.glr"]
    {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
    }
}

#[test]
fn train_toy_trace_never_increases() {
    let dir = tempfile::tempdir().unwrap();
    for mode in ["2d", "3d"] {
        let out = dir.path().join(mode);
        let summary = ok(&[
            "train-toy",
            "--mode",
            mode,
            "--steps",
            "15",
            "--resolution",
            "48x36",
            "--seed",
            "1",
            "--out",
            s(&out),
        ]);
        let trace: Vec<f64> = fs::read_to_string(out.join("trace.csv"))
            .unwrap()
            .lines()
            .skip(1)
            .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
            .collect();
        assert_eq!(trace.len(), 16);
        assert!(trace.windows(2).all(|w| w[1] <= w[0]), "{mode}: {trace:?}");
        assert_eq!(summary["final_loss"].as_f64().unwrap(), *trace.last().unwrap());
        assert_eq!(read_params(&out.join("params.glr")).unwrap().dims(), (48, 36));
    }
}

#[test]
fn png16_records_are_readable() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["synth", "--seed", "0", "--resolution", "48x36", "--format", "png16", "--out", s(dir.path())]);
    let rec = dir.path().join("scene_000000");
    assert!(rec.join("depth.png").is_file() && rec.join("layout_depth.png").is_file());
    ok(&["pipeline", "--record", s(&rec), "--out", s(&dir.path().join("lay"))]);
}

#[test]
fn input_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let (code, err) = failure(&["fit", "--record", s(&dir.path().join("missing")), "--out", s(dir.path())]);
    assert_eq!(code, 2);
    assert_eq!(err["error"], "missing_field");

    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "[loss]\nunknown_key = 1\n").unwrap();
    let (code, err) = failure(&["synth", "--config", s(&cfg), "--out", s(dir.path())]);
    assert_eq!(code, 2);
    assert_eq!(err["error"], "config");

    let junk = dir.path().join("junk.glr");
    fs::write(&junk, b"GLR1 but not really").unwrap();
    let (code, err) = failure(&["cluster", "--params", s(&junk), "--out", s(dir.path())]);
    assert_eq!(code, 2);
    assert_eq!(err["error"], "corrupt_raster");

    let (code, err) = failure(&["stitch", "--instances", s(&junk), "--out", s(dir.path())]);
    assert_eq!(code, 2);
    assert_eq!(err["error"], "invalid_argument");

    // Argument parsing errors also map to 2.
    let out = run(&["synth", "--resolution", "64by48"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn numerical_failures_exit_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let mut k = 0u64;
    let mut next = move || {
        k = k.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (k >> 11) as f64 / (1u64 << 53) as f64 * 18.0 - 9.0
    };
    let garbage = ParamMap::from_fn(8, 8, |_, _| Some([next(), next(), next(), 1.0]));
    let path = dir.path().join("garbage.glr");
    write_params(&path, &garbage).unwrap();
    let cfg = dir.path().join("tight.toml");
    fs::write(&cfg, "[layout.cluster]\nbandwidth = 0.01\nmin_fraction = 0.05\n").unwrap();
    let (code, err) = failure(&["cluster", "--config", s(&cfg), "--params", s(&path), "--out", s(dir.path())]);
    assert_eq!(code, 3, "{err}");
    assert_eq!(err["error"], "no_instances");
    assert!(err["message"].as_str().unwrap().contains("cluster"));
}

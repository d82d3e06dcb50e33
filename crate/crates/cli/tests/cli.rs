use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ichloc_core::io::{write_matrix, MatrixFormat};
use ichloc_core::Matrix;
use serde_json::Value;

fn ichloc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ichloc"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn synth(dir: &Path, count: u64, seed: u64) -> PathBuf {
    let out = dir.join("scenes");
    let o = ichloc(&["synth", "--out", p(&out), "--count", &count.to_string(), "--seed", &seed.to_string()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    out
}

fn write(path: &Path, text: &str) {
    std::fs::write(path, text).unwrap();
}

#[test]
fn synth_writes_maps_boxes_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let s = synth(dir.path(), 5, 1);
    assert_eq!(std::fs::read_dir(s.join("maps")).unwrap().count(), 5);
    assert!(std::fs::read_to_string(s.join("boxes.csv")).unwrap().starts_with("slice_id,x0,y0,x1,y1\n"));
    let manifest = read_json(&s.join("manifest.json"));
    assert_eq!(manifest["config"]["seed"], 1);
}

#[test]
fn detect_with_published_pooling_params() {
    let dir = tempfile::tempdir().unwrap();
    let s = synth(dir.path(), 6, 2);
    let params = dir.path().join("params.json");
    write(&params, r#"{"h": 0.024, "T": 0.76, "d": 10}"#);
    let out = dir.path().join("det.json");
    let o = ichloc(&["detect", "--maps", p(&s.join("maps")), "--params", p(&params), "--out", p(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let dets = read_json(&out);
    for d in dets.as_array().unwrap() {
        assert!(d["score"].as_f64().unwrap() > 0.76);
        assert!(d["x"].as_u64().unwrap() < 64 && d["y"].as_u64().unwrap() < 64);
    }

    // Same inputs, one worker thread: byte-identical output.
    let out2 = dir.path().join("det2.json");
    let o = ichloc(&["--jobs", "1", "detect", "--maps", p(&s.join("maps")), "--params", p(&params), "--out", p(&out2)]);
    assert_eq!(code(&o), 0);
    assert_eq!(std::fs::read(&out).unwrap(), std::fs::read(&out2).unwrap());
}

#[test]
fn detect_empty_dir_and_bad_params() {
    let dir = tempfile::tempdir().unwrap();
    let maps = dir.path().join("maps");
    std::fs::create_dir(&maps).unwrap();
    let params = dir.path().join("params.json");
    write(&params, r#"{"h": 0.05, "T": 0.1, "d": 5}"#);
    let out = dir.path().join("det.json");
    let o = ichloc(&["detect", "--maps", p(&maps), "--params", p(&params), "--out", p(&out)]);
    assert_eq!(code(&o), 0);
    assert_eq!(read_json(&out), Value::Array(vec![]));

    for bad in [r#"{"h": 0.05, "T": 0.1}"#, r#"{"h": -0.05, "T": 0.1, "d": 5}"#, "not json"] {
        write(&params, bad);
        let o = ichloc(&["detect", "--maps", p(&maps), "--params", p(&params), "--out", p(&out)]);
        assert_eq!(code(&o), 2, "{bad}: {}", stderr(&o));
    }
}

#[test]
fn evaluate_counts_and_unknown_slices() {
    let dir = tempfile::tempdir().unwrap();
    let boxes = dir.path().join("boxes.csv");
    write(&boxes, "slice_id,x0,y0,x1,y1\ns1,0,0,10,10\ns1,20,20,30,30\n");
    let dets = dir.path().join("det.json");
    write(
        &dets,
        r#"[{"slice_id":"s1","x":5,"y":5,"score":0.9},
            {"slice_id":"s1","x":15,"y":15,"score":0.8},
            {"slice_id":"s2","x":1,"y":1,"score":0.7}]"#,
    );
    let report = dir.path().join("report.json");
    let per = dir.path().join("per_slice.csv");
    let o = ichloc(&[
        "evaluate", "--detections", p(&dets), "--boxes", p(&boxes), "--out", p(&report), "--per-slice", p(&per),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let r = read_json(&report);
    assert_eq!((r["tp"].as_u64(), r["fp"].as_u64(), r["fn"].as_u64()), (Some(1), Some(2), Some(1)));
    assert_eq!(r["ppv"].as_f64(), Some(33.33));
    assert_eq!(r["se"].as_f64(), Some(50.0));
    assert_eq!(r["dice"].as_f64(), Some(40.0));
    assert_eq!(
        std::fs::read_to_string(&per).unwrap(),
        "slice_id,tp,fp,fn\ns1,1,1,1\ns2,0,1,0\n"
    );
}

#[test]
fn evaluate_table_fixture_dice_is_harmonic_mean() {
    // 336 / (336 + 207) = 61.88 %, 336 / (336 + 278) = 54.72 %.
    let dir = tempfile::tempdir().unwrap();
    let mut boxes = String::from("slice_id,x0,y0,x1,y1\n");
    let mut dets = Vec::new();
    for i in 0..614 {
        boxes.push_str(&format!("s{i},0,0,4,4\n"));
        if i < 336 {
            dets.push(format!(r#"{{"slice_id":"s{i}","x":1,"y":1,"score":1.0}}"#));
        }
    }
    for i in 0..207 {
        dets.push(format!(r#"{{"slice_id":"f{i}","x":1,"y":1,"score":1.0}}"#));
    }
    write(&dir.path().join("boxes.csv"), &boxes);
    write(&dir.path().join("det.json"), &format!("[{}]", dets.join(",")));
    let out = dir.path().join("r.json");
    let o = ichloc(&[
        "evaluate",
        "--detections",
        p(&dir.path().join("det.json")),
        "--boxes",
        p(&dir.path().join("boxes.csv")),
        "--out",
        p(&out),
    ]);
    assert_eq!(code(&o), 0);
    let r = read_json(&out);
    assert_eq!(r["ppv"].as_f64(), Some(61.88));
    assert_eq!(r["se"].as_f64(), Some(54.72));
    assert!((r["dice"].as_f64().unwrap() - 58.08).abs() <= 0.01);
}

#[test]
fn optimize_outputs_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let s = synth(dir.path(), 20, 4);
    let run = |out: &Path, budget: &str| {
        ichloc(&[
            "optimize", "--maps", p(&s.join("maps")), "--boxes", p(&s.join("boxes.csv")), "--budget", budget,
            "--seed", "9", "--out", p(out),
        ])
    };
    let a = dir.path().join("a");
    let o = run(&a, "60");
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let hist = std::fs::read_to_string(a.join("history.csv")).unwrap();
    assert!(hist.starts_with("iteration,h,T,d,dice\n"));
    assert_eq!(hist.lines().count(), 61);
    let best = read_json(&a.join("best_params.json"));
    assert!(best["h"].is_number() && best["T"].is_number() && best["d"].is_number());

    let (b, c) = (dir.path().join("b"), dir.path().join("c"));
    assert_eq!(code(&run(&b, "12")), 0);
    assert_eq!(code(&run(&c, "12")), 0);
    assert_eq!(std::fs::read(b.join("history.csv")).unwrap(), std::fs::read(c.join("history.csv")).unwrap());

    assert_eq!(code(&run(&dir.path().join("d"), "4")), 2);
}

#[test]
fn window_outputs_and_errors() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("hu");
    std::fs::create_dir(&input).unwrap();
    for i in 0..3 {
        let m = Matrix::from_fn(8, 6, |r, c| -100.0 + 10.0 * (r * 6 + c) as f64 + i as f64).unwrap();
        write_matrix(&m, input.join(format!("slice{i}.amap")), MatrixFormat::Amap).unwrap();
    }
    let out = dir.path().join("out");
    let o = ichloc(&["window", "--input", p(&input), "--out", p(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    for i in 0..3 {
        let m = ichloc_core::io::read_matrix(out.join(format!("slice{i}.amap")), MatrixFormat::Amap).unwrap();
        assert_eq!(m.dims(), (24, 6));
    }
    let stats = read_json(&out.join("stats.json"));
    assert!(stats["std"].as_f64().unwrap() > 0.0);

    let o = ichloc(&["window", "--input", p(&input), "--out", p(&dir.path().join("pc")), "--per-channel"]);
    assert_eq!(code(&o), 0);
    assert_eq!(read_json(&dir.path().join("pc/stats.json")).as_array().map(Vec::len), Some(3));

    let missing = dir.path().join("missing");
    let o = ichloc(&["window", "--input", p(&missing), "--out", p(&out)]);
    assert_eq!(code(&o), 3);
    assert!(stderr(&o).contains("missing"));

    std::fs::write(input.join("broken.amap"), b"AMAP1\n\x02\x00").unwrap();
    let o = ichloc(&["window", "--input", p(&input), "--out", p(&out)]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("broken.amap"), "{}", stderr(&o));
}

#[test]
fn train_head_then_attend() {
    let dir = tempfile::tempdir().unwrap();
    let s = dir.path().join("s");
    let o = ichloc(&["synth", "--out", p(&s), "--count", "1", "--bags-pos", "30", "--bags-neg", "30", "--seed", "5"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let head = dir.path().join("head");
    let o = ichloc(&["train-head", "--bags", p(&s.join("bags")), "--out", p(&head), "--epochs", "15"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(read_json(&head.join("training.json"))["train_accuracy"].as_f64().unwrap() > 0.9);

    let map = dir.path().join("att.amap");
    let bag = s.join("bags/bag_00000.amap");
    let o = ichloc(&[
        "attend", "--bag", p(&bag), "--params", p(&head), "--rows", "32", "--cols", "32", "--out", p(&map),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let m = ichloc_core::io::read_matrix(&map, MatrixFormat::Amap).unwrap();
    assert_eq!(m.dims(), (32, 32));
    assert!(m.min() >= 0.0);

    // The max-pooling head needs a scalar feature map.
    let o = ichloc(&["attend", "--bag", p(&bag), "--head", "pooling", "--rows", "32", "--cols", "32", "--out", p(&map)]);
    assert_eq!(code(&o), 2);
}

#[test]
fn run_end_to_end_with_optimization() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), 60, 6);
    let cfg = dir.path().join("pipeline.json");
    write(
        &cfg,
        r#"{"maps_dir": "scenes/maps", "boxes": "scenes/boxes.csv", "detector": "optimize",
            "optimize": {"budget": 30}, "out_dir": "run1", "seed": 3}"#,
    );
    let o = ichloc(&["run", "--config", p(&cfg)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let r = read_json(&dir.path().join("run1/report.json"));
    assert!(r["dice"].as_f64().unwrap() >= 90.0, "{r}");
    assert_eq!(read_json(&dir.path().join("run1/test_slices.json")).as_array().unwrap().len(), 36);

    // Same config and seed: identical report.
    let o = ichloc(&["run", "--config", p(&cfg), "--out", p(&dir.path().join("run3"))]);
    assert_eq!(code(&o), 0);
    assert_eq!(
        std::fs::read(dir.path().join("run1/report.json")).unwrap(),
        std::fs::read(dir.path().join("run3/report.json")).unwrap()
    );
}

#[test]
fn run_rejects_ambiguous_detector() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), 3, 1);
    let cfg = dir.path().join("c.json");
    write(
        &cfg,
        r#"{"maps_dir": "scenes/maps", "boxes": "scenes/boxes.csv", "detector": {"h": 0.1, "T": 0.1, "d": 5},
            "optimize": {"budget": 10}, "out_dir": "o"}"#,
    );
    let o = ichloc(&["run", "--config", p(&cfg)]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    assert!(stderr(&o).contains("both"));
}

#[test]
fn run_with_fixed_params_and_flag_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let s = synth(dir.path(), 8, 2);
    let cfg = dir.path().join("c.json");
    write(&cfg, r#"{"detector": {"h": 0.05, "T": 0.1, "d": 8}}"#);
    let out = dir.path().join("out");
    let o = ichloc(&[
        "run", "--config", p(&cfg), "--maps", p(&s.join("maps")), "--boxes", p(&s.join("boxes.csv")), "--out", p(&out),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(read_json(&out.join("report.json"))["dice"].as_f64().unwrap() > 90.0);
    assert_eq!(read_json(&out.join("params.json"))["d"].as_f64(), Some(8.0));

    // Supplying the stored detections skips detection and gives the same report.
    let reuse = dir.path().join("reuse.json");
    write(&reuse, r#"{"detections": "out/detections.json", "boxes": "scenes/boxes.csv", "detector": "published", "out_dir": "again"}"#);
    let o = ichloc(&["run", "--config", p(&reuse)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(
        std::fs::read(out.join("report.json")).unwrap(),
        std::fs::read(dir.path().join("again/report.json")).unwrap()
    );
}

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use patchland::eval::{parse_ppm, SweepResult};
use patchland::raster::load_labels;
use serde_json::json;

fn patchland(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_patchland"))
        .args(args)
        .env_remove("PATCHLAND_THREADS")
        .output()
        .expect("binary runs")
}

fn ok(out: Output) -> String {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Writes a small scene into `dir` and returns `(cube, labels)`.
fn small_scene(dir: &Path, classes: usize, fields: usize) -> (PathBuf, PathBuf) {
    let spec = dir.join("spec.json");
    let doc = json!({
        "rows": 24, "cols": 24, "bands": 4,
        "class_count": classes, "field_count": fields,
        "noise_sigma": 0.05, "salt_pepper_rate": 0.1, "seed": 3
    });
    fs::write(&spec, doc.to_string()).unwrap();
    ok(patchland(&["synth", "--config", s(&spec), "--out", s(dir)]));
    (dir.join("scene.cube"), dir.join("scene.lbl"))
}

fn run_config(dir: &Path, cube: &Path, labels: &Path) -> PathBuf {
    let path = dir.join("run.json");
    let doc = json!({
        "cube": cube, "labels": labels, "out_dir": dir.join("out"), "model": dir.join("model.json"),
        "patch_size": 3, "seed": 1,
        "nn": {"hidden": [16, 8], "epochs": 10},
        "cnn": {"filters": [4], "fc": [8], "epochs": 5}
    });
    fs::write(&path, doc.to_string()).unwrap();
    path
}

#[test]
fn synth_is_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let (ca, la) = small_scene(a.path(), 3, 6);
    let (cb, lb) = small_scene(b.path(), 3, 6);
    assert_eq!(fs::read(ca).unwrap(), fs::read(cb).unwrap());
    assert_eq!(fs::read(la).unwrap(), fs::read(lb).unwrap());
}

#[test]
fn synth_thirteen_classes() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("spec.json");
    let doc = json!({
        "rows": 60, "cols": 60, "bands": 3, "class_count": 13, "field_count": 13,
        "noise_sigma": 0.05, "salt_pepper_rate": 0.0, "seed": 1
    });
    fs::write(&spec, doc.to_string()).unwrap();
    ok(patchland(&["synth", "--config", s(&spec), "--out", s(dir.path())]));
    let labels = load_labels(dir.path().join("scene.lbl")).unwrap();
    assert_eq!(labels.class_ids(), (1..=13).collect::<Vec<u16>>());
}

#[test]
fn train_then_evaluate_agree() {
    let dir = tempfile::tempdir().unwrap();
    let (cube, labels) = small_scene(dir.path(), 3, 6);
    let cfg = run_config(dir.path(), &cube, &labels);
    let before = (fs::read(&cube).unwrap(), fs::read(&labels).unwrap());
    for clf in ["svm", "nn"] {
        ok(patchland(&["train", "--config", s(&cfg), "--classifier", clf]));
        let out = dir.path().join("out");
        let trained: serde_json::Value = serde_json::from_slice(&fs::read(out.join("metrics.json")).unwrap()).unwrap();
        ok(patchland(&["evaluate", "--config", s(&cfg)]));
        let evaluated: serde_json::Value =
            serde_json::from_slice(&fs::read(out.join("evaluation.json")).unwrap()).unwrap();
        assert_eq!(trained["classifier"], clf);
        assert_eq!(trained["overall_accuracy"], evaluated["overall_accuracy"]);
        assert_eq!(trained["confusion"], evaluated["confusion"]);
    }
    assert_eq!(before, (fs::read(&cube).unwrap(), fs::read(&labels).unwrap()));
}

#[test]
fn missing_cube_is_a_data_error_naming_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nowhere.cube");
    let out = patchland(&["train", "--cube", s(&missing), "--labels", s(&missing)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nowhere.cube"));
}

#[test]
fn bad_config_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    fs::write(&cfg, r#"{"patch_size": 4}"#).unwrap();
    assert_eq!(patchland(&["train", "--config", s(&cfg)]).status.code(), Some(1));
    assert_eq!(patchland(&["train", "--no-such-flag"]).status.code(), Some(1));
    assert_eq!(patchland(&["train", "--classifier", "forest"]).status.code(), Some(1));
}

#[test]
fn model_refuses_cube_with_other_band_count() {
    let dir = tempfile::tempdir().unwrap();
    let (cube, labels) = small_scene(dir.path(), 3, 6);
    let cfg = run_config(dir.path(), &cube, &labels);
    ok(patchland(&["train", "--config", s(&cfg)]));

    let other = dir.path().join("other");
    fs::create_dir(&other).unwrap();
    let spec = other.join("spec.json");
    let doc = json!({
        "rows": 24, "cols": 24, "bands": 5, "class_count": 3, "field_count": 6,
        "noise_sigma": 0.05, "salt_pepper_rate": 0.1, "seed": 3
    });
    fs::write(&spec, doc.to_string()).unwrap();
    ok(patchland(&["synth", "--config", s(&spec), "--out", s(&other)]));
    let out = patchland(&["classify", "--config", s(&cfg), "--cube", s(&other.join("scene.cube"))]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn classify_renders_a_stable_map() {
    let dir = tempfile::tempdir().unwrap();
    let (cube, labels) = small_scene(dir.path(), 3, 6);
    let cfg = run_config(dir.path(), &cube, &labels);
    ok(patchland(&["train", "--config", s(&cfg)]));
    ok(patchland(&["classify", "--config", s(&cfg)]));
    let out = dir.path().join("out");
    let first = fs::read(out.join("classified.ppm")).unwrap();
    let (w, h, _) = parse_ppm(&first).unwrap();
    assert_eq!((w, h), (24, 24));
    let map = load_labels(out.join("classified.lbl")).unwrap();
    assert!(map.labels().iter().all(|&l| (1..=3).contains(&l)));

    ok(patchland(&["classify", "--config", s(&cfg), "--threads", "2"]));
    assert_eq!(first, fs::read(out.join("classified.ppm")).unwrap());
}

#[test]
fn sweep_writes_one_row_per_size() {
    let dir = tempfile::tempdir().unwrap();
    let (cube, labels) = small_scene(dir.path(), 3, 6);
    let cfg = run_config(dir.path(), &cube, &labels);
    let stdout = ok(patchland(&[
        "sweep",
        "--config",
        s(&cfg),
        "--patch-sizes",
        "1,3,5",
        "--classifiers",
        "svm",
    ]));
    assert!(stdout.contains("spread"));
    let csv = fs::read(dir.path().join("out/sweep.csv")).unwrap();
    let result = SweepResult::from_csv(&csv).unwrap();
    let sizes: Vec<usize> = result.rows.iter().map(|r| r.patch_size).collect();
    assert_eq!(sizes, vec![1, 3, 5]);
    assert_eq!(SweepResult::from_csv(&result.to_csv()).unwrap(), result);
}

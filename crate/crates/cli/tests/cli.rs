use std::path::Path;
use std::process::{Command, Output};

use serde_json::{json, Value};

fn somnoflow(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_somnoflow"))
        .args(args)
        .env("RUST_LOG", "warn")
        .env_remove("SOMNOFLOW_THREADS")
        .output()
        .unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// A study small enough to run in seconds.
fn small_config(dir: &Path) -> std::path::PathBuf {
    let out = somnoflow(&["default-config"]);
    assert!(out.status.success());
    let mut cfg: Value = serde_json::from_slice(&out.stdout).unwrap();
    cfg["synth"]["n_recordings"] = json!(4);
    cfg["synth"]["recording"]["n_epochs"] = json!(12);
    cfg["deepnet"]["corpus"]["n_recordings"] = json!(3);
    cfg["deepnet"]["corpus"]["n_epochs"] = json!(12);
    let net = &mut cfg["deepnet"]["train"]["net"];
    net["stem_channels"] = json!(4);
    net["stage_channels"] = json!([8, 16]);
    net["flat_dim"] = json!(128);
    net["hidden_dim"] = json!(16);
    net["feature_dim"] = json!(8);
    cfg["deepnet"]["train"]["max_epochs"] = json!(1);
    cfg["deepnet"]["train"]["samples_per_epoch"] = json!(64);
    cfg["forest"]["n_trees"] = json!(10);
    cfg["eval"]["k"] = json!(2);
    let path = dir.join("small.json");
    std::fs::write(&path, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
    path
}

#[test]
fn version_names_the_format() {
    let o = somnoflow(&["--version"]);
    assert!(o.status.success());
    let s = String::from_utf8(o.stdout).unwrap();
    assert!(s.starts_with("somnoflow ") && s.contains("format version 1"), "{s}");
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    assert_eq!(somnoflow(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(somnoflow(&[]).status.code(), Some(1));
}

#[test]
fn simulate_then_featurize() {
    let dir = tempfile::tempdir().unwrap();
    let rec = dir.path().join("rec");
    let o = somnoflow(&["simulate", "--out", p(&rec), "--epochs", "2", "--no-frames"]);
    assert!(o.status.success(), "{}", stderr(&o));
    for f in ["manifest.json", "hypnogram.csv", "hr.csv", "br.csv", "ecg.f32", "ecg.f32.json", "rip_abd.f32"] {
        assert!(rec.join(f).exists(), "{f}");
    }
    let manifest: Value = serde_json::from_slice(&std::fs::read(rec.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["n_frames"], json!(0));

    // Featurize with an all-zero activity series of the right length.
    let mut act = String::from("t_s,upper,lower\n");
    for k in 0..240 {
        act.push_str(&format!("{},0,0\n", k as f64 / 4.0));
    }
    std::fs::write(dir.path().join("act.csv"), act).unwrap();
    let feats = dir.path().join("features.csv");
    let o = somnoflow(&[
        "featurize",
        "--activity",
        p(&dir.path().join("act.csv")),
        "--hr",
        p(&rec.join("hr.csv")),
        "--br",
        p(&rec.join("br.csv")),
        "--out",
        p(&feats),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(&feats).unwrap();
    assert_eq!(text.lines().count(), 3);
}

#[test]
fn malformed_csv_names_the_column() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("hr.csv"), "t_s,valu,sqi\n0,60,1\n").unwrap();
    std::fs::write(dir.path().join("act.csv"), "t_s,upper,lower\n0,0,0\n").unwrap();
    let o = somnoflow(&[
        "featurize",
        "--activity",
        p(&dir.path().join("act.csv")),
        "--hr",
        p(&dir.path().join("hr.csv")),
        "--br",
        p(&dir.path().join("hr.csv")),
        "--out",
        p(&dir.path().join("f.csv")),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("\"value\""), "{}", stderr(&o));
}

#[test]
fn missing_input_exits_with_io_code() {
    let dir = tempfile::tempdir().unwrap();
    let rec = dir.path().join("rec");
    assert!(somnoflow(&["simulate", "--out", p(&rec), "--epochs", "1", "--no-frames"]).status.success());
    let o = somnoflow(&[
        "extract-activity",
        "--frames",
        p(&dir.path().join("nope")),
        "--manifest",
        p(&rec.join("manifest.json")),
        "--out",
        p(&dir.path().join("a.csv")),
    ]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn existing_outputs_need_force() {
    let dir = tempfile::tempdir().unwrap();
    let rec = dir.path().join("rec");
    let args = ["simulate", "--out", p(&rec), "--epochs", "1", "--no-frames"];
    assert!(somnoflow(&args).status.success());
    let first = std::fs::read(rec.join("hr.csv")).unwrap();
    let o = somnoflow(&args);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("--force"), "{}", stderr(&o));
    let mut forced = args.to_vec();
    forced.push("--force");
    assert!(somnoflow(&forced).status.success());
    assert_eq!(std::fs::read(rec.join("hr.csv")).unwrap(), first);
}

#[test]
fn run_is_independent_of_thread_count() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let o = somnoflow(&["run", "--config", p(&cfg), "--out", p(&a), "--threads", "1"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let o = somnoflow(&["run", "--config", p(&cfg), "--out", p(&b), "--threads", "3"]);
    assert!(o.status.success(), "{}", stderr(&o));
    for f in ["report.json", "model/weights.bin", "model_raw/weights.bin"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }

    // Re-evaluating the written study reproduces the report.
    let again = dir.path().join("again.json");
    let o = somnoflow(&["evaluate", "--config", p(&cfg), "--study", p(&a.join("study")), "--out", p(&again)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(std::fs::read(again).unwrap(), std::fs::read(a.join("report.json")).unwrap());
}

#[test]
fn activity_from_manifest_or_corners_agree() {
    let dir = tempfile::tempdir().unwrap();
    let rec = dir.path().join("rec");
    assert!(somnoflow(&["simulate", "--out", p(&rec), "--epochs", "1"]).status.success());
    let manifest: Value = serde_json::from_slice(&std::fs::read(rec.join("manifest.json")).unwrap()).unwrap();
    let corners: Vec<String> = manifest["bed"]["correspondences"]
        .as_array()
        .unwrap()
        .iter()
        .flat_map(|c| c["src"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap().to_string()).collect::<Vec<_>>())
        .collect();
    assert_eq!(corners.len(), 8);
    let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    let frames = rec.join("frames");
    let o = somnoflow(&["extract-activity", "--frames", p(&frames), "--manifest", p(&rec.join("manifest.json")), "--out", p(&a)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let o = somnoflow(&["extract-activity", "--frames", p(&frames), "--corners", &corners.join(","), "--out", p(&b)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read(&a).unwrap();
    assert_eq!(text, std::fs::read(&b).unwrap());
    assert_eq!(String::from_utf8(text).unwrap().lines().count(), 1 + 120);

    let o = somnoflow(&["extract-activity", "--frames", p(&frames), "--corners", "1,2,3", "--out", p(&dir.path().join("c.csv"))]);
    assert_eq!(o.status.code(), Some(1));
}

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn scenaug(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_scenaug"))
        .current_dir(dir)
        .args(args)
        .output()
        .unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn synth(dir: &Path, count: &str) {
    let out = scenaug(dir, &["--seed", "3", "synth", "--count", count, "--out", "syn"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&scenaug(dir.path(), &["frobnicate"])), 2);
    assert_eq!(code(&scenaug(dir.path(), &["augment", "--in", "x", "--mode", "sideways", "--out", "y"])), 2);
    assert_eq!(code(&scenaug(dir.path(), &["--help"])), 0);
}

#[test]
fn invalid_inputs_exit_3_and_leave_no_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("bad.json"), r#"{"seed": 1, "train": {"epochs": "many"}}"#).unwrap();
    let out = scenaug(d, &["--config", "bad.json", "synth", "--count", "4", "--out", "syn"]);
    assert_eq!(code(&out), 3);
    assert!(String::from_utf8_lossy(&out.stderr).contains("train.epochs"));
    assert!(!d.join("syn").exists());

    fs::write(d.join("broken.jsonl"), "{\"id\": \"x\"}\n").unwrap();
    let out = scenaug(d, &["ingest", "--in", "broken.jsonl", "--out", "ing"]);
    assert_eq!(code(&out), 3);
    assert!(d.join("ing/report.json").exists());
    assert!(!d.join("ing/scenarios.jsonl").exists());
}

#[test]
fn missing_files_exit_4() {
    let dir = tempfile::tempdir().unwrap();
    let out = scenaug(dir.path(), &["rasterize", "--in", "nowhere.jsonl", "--out", "g.exgt"]);
    assert_eq!(code(&out), 4);
    assert!(!dir.path().join("g.exgt").exists());
}

#[test]
fn unrestricted_visible_region_reproduces_the_input() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    synth(d, "8");
    let out = scenaug(d, &["augment", "--in", "syn/scenarios.jsonl", "--mode", "vr", "--alpha", "360", "--distance", "1e6", "--out", "vr.jsonl"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(fs::read(d.join("vr.jsonl")).unwrap(), fs::read(d.join("syn/scenarios.jsonl")).unwrap());
}

#[test]
fn training_twice_gives_identical_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    synth(d, "12");
    for run in ["a", "b"] {
        let out = scenaug(d, &["--seed", "5", "train", "--data", "syn/scenarios.jsonl", "--epochs", "2", "--out", run]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    }
    for f in ["loss.csv", "model.exmd"] {
        assert_eq!(fs::read(d.join("a").join(f)).unwrap(), fs::read(d.join("b").join(f)).unwrap(), "{f}");
    }
    let csv = fs::read_to_string(d.join("a/loss.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
}

#[test]
fn eval_requires_a_label_for_every_scenario() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    synth(d, "12");
    let out = scenaug(d, &["train", "--data", "syn/scenarios.jsonl", "--epochs", "1", "--out", "m"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let labels = fs::read_to_string(d.join("syn/labels.jsonl")).unwrap();
    let partial: String = labels.lines().skip(1).map(|l| format!("{l}\n")).collect();
    fs::write(d.join("partial.jsonl"), partial).unwrap();
    let out = scenaug(d, &["eval", "--model", "m/model.exmd", "--data", "syn/scenarios.jsonl", "--labels", "partial.jsonl", "--tasks", "zeroshot", "--out", "metrics.json"]);
    assert_eq!(code(&out), 3);
    assert!(!d.join("metrics.json").exists());

    let out = scenaug(d, &["eval", "--model", "m/model.exmd", "--data", "syn/scenarios.jsonl", "--labels", "syn/labels.jsonl", "--tasks", "zeroshot,stability", "--out", "metrics.json"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_slice(&fs::read(d.join("metrics.json")).unwrap()).unwrap();
    assert!(report["acc"].as_f64().is_some());
}

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn cmg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cmg"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path
}

fn bundled(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../core/examples")
        .join(format!("{name}.game"))
}

#[test]
fn validate_exit_codes() {
    let ok = cmg(&["validate", bundled("example1").to_str().unwrap()]);
    assert_eq!(code(&ok), 0, "{}", String::from_utf8_lossy(&ok.stderr));

    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(bundled("toy_h2")).unwrap();
    let mut doc: Value = serde_json::from_str(&text).unwrap();
    doc["kernel"][0][0][0] = serde_json::json!([0.9, 0.9]);
    let bad = write(dir.path(), "bad.game", &doc.to_string());
    let out = cmg(&["--json", "validate", bad.to_str().unwrap()]);
    assert_eq!(code(&out), 1);
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["results"]["valid"], Value::Bool(false));

    let garbage = write(dir.path(), "garbage.game", "{ not json");
    assert_eq!(code(&cmg(&["validate", garbage.to_str().unwrap()])), 1);

    assert_eq!(code(&cmg(&["validate", "/definitely/not/here.game"])), 2);
}

#[test]
fn verify_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let uniform = write(dir.path(), "u.json", r#"{"policy":[[[0.25,0.25,0.25,0.25]]]}"#);
    let split = write(dir.path(), "s.json", r#"{"policy":[[["1/2","1/2",0,0]]]}"#);
    let corner = write(dir.path(), "c.json", r#"{"policy":[[[0,0,0,1]]]}"#);

    let out = cmg(&["--json", "verify", "example2", uniform.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["results"]["verdict"], "constrained_CE");
    assert_eq!(report["command"], "verify");
    assert_eq!(report["game_digest"].as_str().unwrap().len(), 64);

    assert_eq!(code(&cmg(&["verify", "example1", split.to_str().unwrap()])), 3);
    assert_eq!(code(&cmg(&["verify", "example1", corner.to_str().unwrap()])), 4);

    let short = write(dir.path(), "short.json", r#"{"policy":[[[0.5,0.5]]]}"#);
    assert_eq!(code(&cmg(&["verify", "example1", short.to_str().unwrap()])), 1);
}

#[test]
fn find_recovers_uniform_point() {
    let out = cmg(&["--json", "find", "example2"]);
    assert_eq!(code(&out), 0);
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    let row = report["results"]["policy"][0][0].as_array().unwrap();
    for x in row {
        assert!((x.as_f64().unwrap() - 0.25).abs() < 1e-9);
    }
    assert_eq!(report["results"]["recheck"]["verdict"], "constrained_CE");
}

#[test]
fn find_rejects_playerwise_games() {
    let out = cmg(&["find", "example1"]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("common"));
}

#[test]
fn seeded_find_on_toy_game() {
    let a = cmg(&["--json", "find", "toy_h2", "--seed", "4"]);
    let b = cmg(&["--json", "find", "toy_h2", "--seed", "4"]);
    assert_eq!(a.stdout, b.stdout);
    let report: Value = serde_json::from_slice(&a.stdout).unwrap();
    assert_eq!(report["seed"], 4);
}

#[test]
fn reproduce_is_deterministic() {
    let a = cmg(&["--json", "reproduce-paper", "--only", "example2"]);
    let b = cmg(&["--json", "reproduce-paper", "--only", "example2"]);
    assert_eq!(code(&a), 0);
    assert_eq!(a.stdout, b.stdout);
    let report: Value = serde_json::from_slice(&a.stdout).unwrap();
    assert_eq!(report["game_digest"], Value::Null);
    assert_eq!(report["results"]["failed"], 0);
}

#[test]
fn slater_and_equivalence_run() {
    let out = cmg(&["--json", "slater", "example1", "--samples", "20", "--seed", "3"]);
    assert_eq!(code(&out), 0);
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["results"]["num_samples"], 20);

    assert_eq!(code(&cmg(&["slater", "example1", "--mode", "weak"])), 1);

    let out = cmg(&["equivalence", "toy_h2", "--player", "0", "--samples", "2"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stdout));
}

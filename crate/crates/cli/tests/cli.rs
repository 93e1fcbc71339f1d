use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use sha2::{Digest, Sha256};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_bubbletree"));
    c.env_remove("BUBBLETREE_THREADS");
    c
}

fn run(args: &[&str], dir: &Path) -> Output {
    bin().args(args).current_dir(dir).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn manifest(dir: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

fn write_config(dir: &Path, body: &str) -> String {
    let p = dir.join("config.json");
    std::fs::write(&p, body).unwrap();
    p.display().to_string()
}

#[test]
fn identities_writes_tables_and_a_complete_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(&["identities", "--out", "id"], tmp.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    let stdout = String::from_utf8(o.stdout).unwrap();
    assert!(stdout.contains("[PASS] K_pp"));
    let out = tmp.path().join("id");
    let profiles = std::fs::read_to_string(out.join("profiles.csv")).unwrap();
    assert!(profiles.starts_with("R,Q,Phi,Theta,sin2Q,cos2Q\r\n"));
    let m = manifest(&out);
    assert_eq!(m["status"], "pass");
    assert_eq!(m["command"], "identities");
    assert!(m["wall_time_s"].as_f64().unwrap() >= 0.0);
    assert_eq!(m["config"]["identities"]["tol"], 1e-8);
    let files = m["outputs"].as_array().unwrap();
    assert_eq!(files.len(), 2);
    for f in files {
        let bytes = std::fs::read(out.join(f["path"].as_str().unwrap())).unwrap();
        let hash: String = Sha256::digest(&bytes)
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect();
        assert_eq!(f["sha256"], hash.as_str());
        assert_eq!(f["bytes"], bytes.len());
    }
}

#[test]
fn fast_verification_passes() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(&["verify-all", "--fast", "--out", "v"], tmp.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    assert!(tmp.path().join("v/checks.csv").exists());
}

#[test]
fn usage_errors_exit_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(&["identities", "--bogus"], tmp.path());
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("Usage"));
    assert_eq!(code(&run(&["frobnicate"], tmp.path())), 2);
    assert_eq!(code(&run(&["identities", "--resume", "x"], tmp.path())), 2);
    assert_eq!(
        code(&run(&["simulate", "--resume", "missing.bin"], tmp.path())),
        2
    );

    let cfg = write_config(tmp.path(), r#"{"identities": {"tol": 1e-8, "typo": 1}}"#);
    assert_eq!(code(&run(&["identities", "--config", &cfg], tmp.path())), 2);
    let cfg = write_config(tmp.path(), r#"{"identities": {"tol": -1}}"#);
    assert_eq!(code(&run(&["identities", "--config", &cfg], tmp.path())), 2);
    let cfg = write_config(tmp.path(), r#"{"corrector": {"grids": [8, 16, 32]}}"#);
    assert_eq!(code(&run(&["corrector", "--config", &cfg], tmp.path())), 2);
    let cfg = write_config(tmp.path(), "{ not json");
    assert_eq!(code(&run(&["identities", "--config", &cfg], tmp.path())), 2);

    let o = bin()
        .args(["identities", "--out", "t"])
        .env("BUBBLETREE_THREADS", "zero")
        .current_dir(tmp.path())
        .output()
        .unwrap();
    assert_eq!(code(&o), 2);
}

#[test]
fn failed_check_exits_with_one() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), r#"{"identities": {"wronskian_tol": 1e-30}}"#);
    let o = run(&["identities", "--config", &cfg, "--out", "f"], tmp.path());
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stdout).contains("[FAIL]"));
    assert_eq!(manifest(&tmp.path().join("f"))["status"], "fail");
}

#[test]
fn outputs_are_deterministic_across_thread_counts() {
    let tmp = tempfile::tempdir().unwrap();
    for (threads, dir) in [("1", "a"), ("3", "b")] {
        let o = bin()
            .args(["propagators", "--out", dir])
            .env("BUBBLETREE_THREADS", threads)
            .current_dir(tmp.path())
            .output()
            .unwrap();
        assert_eq!(code(&o), 0);
    }
    for f in ["discrete.csv", "continuous.csv"] {
        let a = std::fs::read(tmp.path().join("a").join(f)).unwrap();
        let b = std::fs::read(tmp.path().join("b").join(f)).unwrap();
        assert_eq!(a, b, "{f}");
    }
    assert_eq!(manifest(&tmp.path().join("b"))["threads"], 3);
}

#[test]
fn resumed_simulation_matches_uninterrupted_run() {
    let tmp = tempfile::tempdir().unwrap();
    let base =
        r#""lambdas": [1.0], "velocities": [0.3], "r_out": 10.0, "dr": 0.02, "record_every": 10"#;
    let short = write_config(
        tmp.path(),
        &format!(r#"{{"simulate": {{{base}, "t_end": 1.0}}}}"#),
    );
    assert_eq!(
        code(&run(
            &["simulate", "--config", &short, "--out", "s1"],
            tmp.path()
        )),
        0
    );
    let long = tmp.path().join("long.json");
    std::fs::write(
        &long,
        format!(r#"{{"simulate": {{{base}, "t_end": 2.0}}}}"#),
    )
    .unwrap();
    let long = long.display().to_string();
    let o = run(
        &[
            "simulate",
            "--config",
            &long,
            "--out",
            "s2",
            "--resume",
            "s1/checkpoint.bin",
        ],
        tmp.path(),
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    assert_eq!(
        code(&run(
            &["simulate", "--config", &long, "--out", "full"],
            tmp.path()
        )),
        0
    );
    let a = std::fs::read(tmp.path().join("s2/checkpoint.bin")).unwrap();
    let b = std::fs::read(tmp.path().join("full/checkpoint.bin")).unwrap();
    assert_eq!(a, b);
    let m = manifest(&tmp.path().join("s2"));
    assert!(m["results"]["resumed_from"]
        .as_str()
        .unwrap()
        .ends_with("checkpoint.bin"));
}

#[test]
fn collapse_diagnostics_do_not_gate() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        r#"{"simulate": {"mode": "collapse", "dr": 1e-3, "r_out": 2.0, "record_every": 5,
             "collapse": {"t0": 0.1, "t_stop": 0.05}}}"#,
    );
    let o = run(&["simulate", "--config", &cfg, "--out", "c"], tmp.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    let m = manifest(&tmp.path().join("c"));
    assert!(m["checks"]
        .as_array()
        .unwrap()
        .iter()
        .all(|c| c["gating"] == false));
    assert!(m["results"]["exponent"].as_f64().unwrap().is_finite());
    let csv = std::fs::read_to_string(tmp.path().join("c/collapse.csv")).unwrap();
    assert!(csv.lines().count() > 5);
}

#[test]
fn sweep_runs_isolated_pipelines() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        r#"{"sweep": {"runs": [
            {"name": "id", "command": "identities"},
            {"name": "beta2", "command": "modulation", "config": {"modulation": {"n": 2, "beta": 2.0, "t0": 1e-3, "t_min": 1e-6}}},
            {"name": "beta3", "command": "modulation", "config": {"modulation": {"n": 2, "beta": 3.0, "t0": 1e-3, "t_min": 1e-6}}}
        ]}}"#,
    );
    let o = bin()
        .args(["sweep", "--config", &cfg, "--out", "sw"])
        .env("BUBBLETREE_THREADS", "2")
        .current_dir(tmp.path())
        .output()
        .unwrap();
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    let out = tmp.path().join("sw");
    let m = manifest(&out);
    let paths: Vec<&str> = m["outputs"]
        .as_array()
        .unwrap()
        .iter()
        .map(|f| f["path"].as_str().unwrap())
        .collect();
    for p in [
        "id/manifest.json",
        "beta2/hierarchy.csv",
        "beta3/manifest.json",
    ] {
        assert!(paths.contains(&p), "{paths:?}");
    }
    assert_eq!(
        manifest(&out.join("beta3"))["config"]["modulation"]["beta"],
        3.0
    );
    let a = std::fs::read(out.join("beta2/hierarchy.csv")).unwrap();
    let b = std::fs::read(out.join("beta3/hierarchy.csv")).unwrap();
    assert_ne!(a, b);

    let bad = write_config(
        tmp.path(),
        r#"{"sweep": {"runs": [{"name": "x", "command": "sweep"}]}}"#,
    );
    assert_eq!(code(&run(&["sweep", "--config", &bad], tmp.path())), 2);
}

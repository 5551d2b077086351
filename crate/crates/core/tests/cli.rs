use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spectral-barrier"))
        .args(args)
        .env_remove("SPECTRAL_BARRIER_THREADS")
        .output()
        .expect("binary runs")
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!("bad JSON ({e}): {}", String::from_utf8_lossy(&out.stdout))
    })
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn bounds_subcommand() {
    let out = cli(&["bounds", "--kind", "cor1", "--params", "alpha=2,L=3,y=0.001,n=10000"]);
    assert!(out.status.success());
    let v = json(&out);
    assert!((v["lower_bound"].as_f64().unwrap() - 0.703_451_31).abs() < 1e-8);

    let out = cli(&["bounds", "--kind", "cor2", "--params", "L=3,eps=0.5,p=10"]);
    assert_eq!(json(&out)["min_n"], 1920);

    let out = cli(&["bounds", "--kind", "cor3", "--params", "K=1,p=2,n=16"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("precondition"));
}

#[test]
fn certify_one_by_one() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("x.csv");
    std::fs::write(&path, "1\n").unwrap();
    let out = cli(&["certify", "--input", path_str(&path), "--phi", "1", "--verify"]);
    assert!(out.status.success());
    let v = json(&out);
    assert_eq!(v["p"], 1);
    assert_eq!(v["n"], 1);
    assert!((v["l_n"].as_f64().unwrap() + 0.8).abs() < 1e-15);
    assert_eq!(v["lambda_min"], 1.0);
    assert_eq!(v["sound"], true);
}

#[test]
fn sample_then_certify() {
    let dir = tempfile::tempdir().unwrap();
    for format in ["binary", "csv"] {
        let path = dir.path().join(format!("x.{format}"));
        let out = cli(&[
            "sample", "--ensemble", "rademacher:p=4", "--count", "60", "--seed", "3", "--out", path_str(&path),
            "--format", format,
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        let out = cli(&["certify", "--input", path_str(&path), "--phi", "0.25"]);
        assert!(out.status.success());
        let v = json(&out);
        assert_eq!((v["p"].as_u64(), v["n"].as_u64()), (Some(4), Some(60)));
        assert!(v.get("lambda_min").is_none());
        assert_eq!(v["sound"], true);
    }
}

#[test]
fn check_suite() {
    let out = cli(&["check", "--suite", "lemma1", "--trials", "200", "--seed", "1"]);
    assert!(out.status.success());
    let v = json(&out);
    assert_eq!(v["suite"], "lemma1");
    assert!(v["checks"].as_array().unwrap().iter().all(|c| c["pass"] == true));
    assert_eq!(cli(&["check", "--suite", "lemma9"]).status.code(), Some(1));
}

#[test]
fn moments_subcommand() {
    let out = cli(&["moments", "--ensemble", "gaussian:p=3", "--a-grid", "1", "--alpha", "2"]);
    assert!(out.status.success());
    let v = json(&out);
    assert!((v["L"][0]["value"].as_f64().unwrap() - 3.0).abs() < 1e-8);
    assert!((v["c"][0]["value"].as_f64().unwrap() - 0.5160).abs() < 1e-4);
}

const CONFIG: &str = r#"{
    "ensemble": {"family": "gaussian", "p": 4},
    "p": 4, "n": 80, "trials": 6,
    "phi_mode": {"mode": "theorem2_kp"},
    "bounds_to_check": [{"kind": "thm2_l2"}],
    "t_grid": [1.0],
    "seed": 2
}"#;

#[test]
fn simulate_and_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, CONFIG).unwrap();

    let out = cli(&["simulate", "--config", path_str(&cfg)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v = json(&out);
    assert_eq!(v["trials"].as_array().unwrap().len(), 6);

    let threaded = Command::new(env!("CARGO_BIN_EXE_spectral-barrier"))
        .args(["simulate", "--config", path_str(&cfg)])
        .env("SPECTRAL_BARRIER_THREADS", "3")
        .output()
        .unwrap();
    assert_eq!(threaded.stdout, out.stdout);

    let csv = dir.path().join("out.csv");
    let out = cli(&["simulate", "--config", path_str(&cfg), "--out", path_str(&csv), "--format", "csv"]);
    assert!(out.status.success());
    assert!(dir.path().join("out_bounds.csv").exists());

    let out = cli(&["sweep", "--config", path_str(&cfg), "--axis", "phi", "--values", "0.1,0.5"]);
    assert!(out.status.success());
    let v = json(&out);
    assert_eq!(v["reports"].as_array().unwrap().len(), 2);
    assert!(v["best_phi"]["phi"].is_number());
}

#[test]
fn usage_and_io_errors_exit_one() {
    assert_eq!(cli(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(cli(&["simulate", "--config", "/nonexistent/cfg.json"]).status.code(), Some(1));
    assert_eq!(cli(&["--help"]).status.code(), Some(0));
}

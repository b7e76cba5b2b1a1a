use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

const SCALAR: &str = r#"{"r":1,"A":[[0.0]],"B":[[1.0]],"S":[[1.0]]}"#;
const UNCONTROLLABLE: &str = r#"{"r":2,"A":[[1.0,0.0],[0.0,1.0]],"B":[[1.0],[0.0]],"S":[[1.0,0.0],[0.0,0.0]]}"#;
const PLANAR: &str = r#"{"r":2,"A":[[0.2,1.0],[-0.7,-0.1]],"B":[[1.0,0.0],[0.3,0.5]],"S":[[1.0,0.2],[0.2,0.6]]}"#;

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn fkqho(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fkqho")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn error_json(o: &Output) -> Value {
    assert!(!o.status.success());
    serde_json::from_slice(&o.stderr).expect("stderr is one JSON object")
}

#[test]
fn solve_reports_zero_point_energy() {
    let dir = tempfile::tempdir().unwrap();
    let m = write(dir.path(), "m.json", SCALAR);
    let v: Value = serde_json::from_str(&stdout(&fkqho(&["solve", "--model", m.to_str().unwrap()]))).unwrap();
    assert!((v["lambda0"].as_f64().unwrap() - 0.5).abs() < 1e-12);
    assert!(v["solution"]["decay"].is_object());
}

#[test]
fn uncontrollable_model_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let m = write(dir.path(), "m.json", UNCONTROLLABLE);
    let e = error_json(&fkqho(&["validate", "--model", m.to_str().unwrap()]));
    assert_eq!(e["error"], "validation");
    let e = error_json(&fkqho(&["solve", "--model", m.to_str().unwrap()]));
    assert_eq!(e["error"], "validation");
}

#[test]
fn malformed_json_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let m = write(dir.path(), "m.json", "{\"r\": 1, \"A\": [[0.0]");
    let e = error_json(&fkqho(&["solve", "--model", m.to_str().unwrap()]));
    assert_eq!(e["error"], "parse");
    let m = write(dir.path(), "extra.json", r#"{"r":1,"A":[[0.0]],"B":[[1.0]],"S":[[1.0]],"C":1}"#);
    assert_eq!(error_json(&fkqho(&["solve", "--model", m.to_str().unwrap()]))["error"], "parse");
}

#[test]
fn solve_output_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let m = write(dir.path(), "m.json", PLANAR);
    let s = dir.path().join("s.json");
    stdout(&fkqho(&["solve", "--model", m.to_str().unwrap(), "--out", s.to_str().unwrap()]));
    let eta = r#"{"mean":[1.0,-0.5],"cov":[[0.5,0.1],[0.1,0.8]]}"#;
    let from_model = stdout(&fkqho(&["flow", "--model", m.to_str().unwrap(), "--T", "3", "--steps", "30", "--eta0", eta]));
    let from_solve = stdout(&fkqho(&["flow", "--model", s.to_str().unwrap(), "--T", "3", "--steps", "30", "--eta0", eta]));
    assert_eq!(from_model, from_solve);
    let a = stdout(&fkqho(&["simulate", "--model", m.to_str().unwrap(), "--scheme", "backward", "--N", "200", "--T", "1", "--seed", "5"]));
    let b = stdout(&fkqho(&["simulate", "--model", s.to_str().unwrap(), "--scheme", "backward", "--N", "200", "--T", "1", "--seed", "5"]));
    assert_eq!(a, b);
}

#[test]
fn seeded_simulations_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let m = write(dir.path(), "m.json", PLANAR);
    for scheme in ["dmc", "enkf1", "enkf2", "enkf3", "hproc", "backward"] {
        let args = ["simulate", "--model", m.to_str().unwrap(), "--scheme", scheme, "--N", "300", "--T", "1", "--seed", "42"];
        let first = stdout(&fkqho(&args));
        let second = stdout(&fkqho(&args));
        assert_eq!(first, second, "{scheme}");
        let single = Command::new(env!("CARGO_BIN_EXE_fkqho")).args(args).env("FKQHO_THREADS", "1").output().unwrap();
        assert_eq!(first, stdout(&single), "{scheme} with one thread");
        assert!(first.starts_with("t,mean_0,mean_1,cov_00,cov_01,cov_11,lambda0_estimate,jump_count\n"));
    }
}

#[test]
fn stochastic_commands_need_a_seed() {
    let dir = tempfile::tempdir().unwrap();
    let m = write(dir.path(), "m.json", SCALAR);
    let e = error_json(&fkqho(&["simulate", "--model", m.to_str().unwrap(), "--scheme", "dmc"]));
    assert_eq!(e["error"], "usage");
}

#[test]
fn config_file_supplies_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let m = write(dir.path(), "m.json", SCALAR);
    let cfg = write(
        dir.path(),
        "c.json",
        &format!(r#"{{"model": {:?}, "scheme": "dmc", "seed": 3, "N": 100, "T": 0.5, "dt": 0.01, "record_every": 50}}"#, m),
    );
    let out = stdout(&fkqho(&["simulate", "--config", cfg.to_str().unwrap()]));
    assert_eq!(out.lines().count(), 3);
    let overridden = stdout(&fkqho(&["simulate", "--config", cfg.to_str().unwrap(), "--record-every", "10"]));
    assert_eq!(overridden.lines().count(), 7);
    let bad = write(dir.path(), "bad.json", r#"{"seeds": 1}"#);
    assert_eq!(error_json(&fkqho(&["solve", "--config", bad.to_str().unwrap()]))["error"], "config");
}

#[test]
fn verify_fast_passes_on_mehler_model() {
    let dir = tempfile::tempdir().unwrap();
    let m = write(dir.path(), "m.json", SCALAR);
    let v: Value = serde_json::from_str(&stdout(&fkqho(&["verify", "--model", m.to_str().unwrap(), "--level", "fast"]))).unwrap();
    assert_eq!(v["passed"], true);
}

#[test]
fn spectrum_and_mehler_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let m = write(dir.path(), "m.json", SCALAR);
    let v: Value = serde_json::from_str(&stdout(&fkqho(&["spectrum", "--model", m.to_str().unwrap(), "--M", "3"]))).unwrap();
    let lambdas: Vec<f64> = v["entries"].as_array().unwrap().iter().map(|e| e["lambda_n"].as_f64().unwrap()).collect();
    assert_eq!(lambdas.len(), 4);
    for (n, l) in lambdas.iter().enumerate() {
        assert!((l - (n as f64 + 0.5)).abs() < 1e-10);
    }
    let r: Value = serde_json::from_str(&stdout(&fkqho(&["mehler", "--model", m.to_str().unwrap()]))).unwrap();
    assert!(r["series_error"].as_f64().unwrap() <= 1e-6);
    assert!(r["propagator_error"].as_f64().unwrap() <= 1e-10);
    let planar = write(dir.path(), "p.json", PLANAR);
    assert_eq!(error_json(&fkqho(&["spectrum", "--model", planar.to_str().unwrap()]))["error"], "precondition");
}

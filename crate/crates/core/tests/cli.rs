use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_sphere-heat");

fn config(dir: &Path, body: &str) -> std::path::PathBuf {
    let path = dir.join("config.json");
    fs::write(&path, body).unwrap();
    path
}

fn sphere_heat(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().unwrap()
}

const SIMULATE: &str = r#"{
    "domain": {"lengths": [3.141592653589793], "grid_points": [64]},
    "modes": 32, "p": 4, "T": 0.2, "dt": 0.001, "m": 4,
    "noise": [{"mode": 2, "amplitude": 0.2}, {"mode": [3], "amplitude": 0.1}],
    "u0": [{"mode": 1}, {"mode": 2, "weight": 0.5}]
}"#;

#[test]
fn reruns_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config(tmp.path(), SIMULATE);
    let runs: Vec<_> = ["a", "b"]
        .iter()
        .map(|name| {
            let out = tmp.path().join(name);
            let o = sphere_heat(&["simulate", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--seed", "3"]);
            assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
            ["trajectory.csv", "summary.json", "manifest.json"].map(|f| fs::read(out.join(f)).unwrap())
        })
        .collect();
    assert_eq!(runs[0], runs[1]);

    let other = tmp.path().join("c");
    let o = sphere_heat(&["simulate", "--config", cfg.to_str().unwrap(), "--out", other.to_str().unwrap(), "--seed", "4"]);
    assert!(o.status.success());
    assert_ne!(fs::read(other.join("trajectory.csv")).unwrap(), runs[0][0]);
}

#[test]
fn verify_detects_tampering() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config(tmp.path(), SIMULATE);
    let out = tmp.path().join("run");
    let out_s = out.to_str().unwrap();
    assert!(sphere_heat(&["simulate", "--config", cfg.to_str().unwrap(), "--out", out_s]).status.success());
    assert!(sphere_heat(&["verify", out_s]).status.success());

    let csv = out.join("trajectory.csv");
    let mut bytes = fs::read(&csv).unwrap();
    let last = bytes.len() - 2;
    bytes[last] = if bytes[last] == b'1' { b'2' } else { b'1' };
    fs::write(&csv, bytes).unwrap();
    let o = sphere_heat(&["verify", out_s]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stdout).contains("trajectory.csv"));
}

#[test]
fn config_errors_exit_with_key_paths() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config(tmp.path(), &SIMULATE.replace("\"p\": 4", "\"p\": 1.5").replace("\"m\": 4", "\"m\": 4, \"extra\": true"));
    let o = sphere_heat(&["simulate", "--config", cfg.to_str().unwrap(), "--out", tmp.path().join("x").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("$.p: p must be ≥ 2, got 1.5"), "{err}");
    assert!(err.contains("$.extra: unknown key"), "{err}");

    let o = sphere_heat(&["run", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("$.kind"));
}

#[test]
fn run_dispatches_on_kind_and_monte_carlo_ignores_worker_count() {
    let tmp = tempfile::tempdir().unwrap();
    let body = SIMULATE.replacen('{', r#"{"kind": "monte_carlo", "samples": 6,"#, 1);
    let cfg = config(tmp.path(), &body);
    let tables: Vec<_> = ["1", "3"]
        .iter()
        .map(|w| {
            let out = tmp.path().join(format!("w{w}"));
            let o = sphere_heat(&["run", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--workers", w]);
            assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stdout));
            fs::read(out.join("monte_carlo.csv")).unwrap()
        })
        .collect();
    assert_eq!(tables[0], tables[1]);
    let rows = String::from_utf8(tables[0].clone()).unwrap();
    assert_eq!(rows.lines().count(), 7);
}

#[test]
fn identity_suite_reports_nine_pairings() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config(tmp.path(), SIMULATE);
    let out = tmp.path().join("ids");
    let o = sphere_heat(&["identity-suite", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success());
    let summary: serde_json::Value = serde_json::from_slice(&fs::read(out.join("summary.json")).unwrap()).unwrap();
    let pairings = summary["results"]["pairings"].as_array().unwrap();
    assert_eq!(pairings.len(), 9);
    assert!(pairings.iter().all(|p| p["max_rel_error"].as_f64().unwrap() <= 1e-8));
    assert!(summary.get("wall_time_secs").is_none());
}

#[test]
fn failed_checks_exit_one() {
    let tmp = tempfile::tempdir().unwrap();
    // strong noise at coarse dt leaves the sphere and blows up
    let body = SIMULATE.replace("\"amplitude\": 0.2", "\"amplitude\": 30").replace("\"dt\": 0.001", "\"dt\": 0.01");
    let cfg = config(tmp.path(), &body);
    let out = tmp.path().join("bad");
    let o = sphere_heat(&["simulate", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1), "{}", String::from_utf8_lossy(&o.stdout));
    let summary: serde_json::Value = serde_json::from_slice(&fs::read(out.join("summary.json")).unwrap()).unwrap();
    assert!(summary["divergence"].as_u64().is_some());
    assert!(fs::read_to_string(out.join("trajectory.csv")).unwrap().lines().count() > 1);
}

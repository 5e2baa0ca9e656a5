use std::path::{Path, PathBuf};
use std::process::Command;

use serde_json::Value;
use sha2::{Digest, Sha256};

fn run(cmd: &str, config: &str, out: &Path, extra: &[&str]) -> (i32, PathBuf) {
    let cfg = out.with_extension("json");
    std::fs::write(&cfg, config).unwrap();
    let status = Command::new(env!("CARGO_BIN_EXE_degenctrl"))
        .arg(cmd)
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(out)
        .args(extra)
        .status()
        .unwrap();
    (status.code().unwrap(), out.to_path_buf())
}

fn manifest(dir: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

fn csv_column(path: &Path, name: &str) -> Vec<f64> {
    let mut rdr = csv::Reader::from_path(path).unwrap();
    let idx = rdr.headers().unwrap().iter().position(|h| h == name).unwrap();
    rdr.records().map(|r| r.unwrap()[idx].parse().unwrap()).collect()
}

#[test]
fn spectrum_matches_oracle_and_hashes_match() {
    let tmp = tempfile::tempdir().unwrap();
    let (code, dir) = run("spectrum", r#"{"alpha":0.5,"T_horizon":1.0,"n_r":400}"#, &tmp.path().join("s"), &[]);
    assert_eq!(code, 0);
    let rel = csv_column(&dir.join("spectrum.csv"), "rel_error");
    assert_eq!(rel.len(), 10);
    assert!(rel.iter().all(|&e| e < 5e-3), "{rel:?}");
    let m = manifest(&dir);
    assert_eq!(m["status"], "ok");
    assert_eq!(m["config"]["options"]["k"], 10);
    assert_eq!(m["config"]["model"]["n_r"], 400);
    for a in m["artifacts"].as_array().unwrap() {
        let bytes = std::fs::read(dir.join(a["file"].as_str().unwrap())).unwrap();
        assert_eq!(hex::encode(Sha256::digest(&bytes)), a["sha256"].as_str().unwrap());
    }
    let text = std::fs::read_to_string(dir.join("spectrum.csv")).unwrap();
    assert!(!text.contains('\r'));
}

#[test]
fn density_seq_example() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = r#"{"alpha":0.5,"T_horizon":1.0,
        "density_seq":{"intervals":[[0.0,1.0]],"ell":0.5,"q":0.5,"m_max":4,"ell1":0.9}}"#;
    let (code, dir) = run("density-seq", cfg, &tmp.path().join("d"), &[]);
    assert_eq!(code, 0);
    let v = csv_column(&dir.join("density_seq.csv"), "ell_m");
    for (a, b) in v.iter().zip([0.9, 0.7, 0.6, 0.55]) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn config_errors_have_distinct_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let (code, dir) = run("spectrum", r#"{"alpha":"0.5","T_horizon":1.0}"#, &tmp.path().join("a"), &[]);
    assert_eq!(code, 2);
    assert_eq!(manifest(&dir)["exit_code"], 2);
    let (code, _) = run("spectrum", r#"{"alpha":0.5,"T_horizon":1.0,"beta":1}"#, &tmp.path().join("b"), &[]);
    assert_eq!(code, 2);
    let (code, _) = run("hum", r#"{"alpha":0.5,"T_horizon":1.0,"hum":{"epsilonn":1}}"#, &tmp.path().join("c"), &[]);
    assert_eq!(code, 2);
    let (code, _) = run("spectrum", r#"{"alpha":1.5,"T_horizon":1.0}"#, &tmp.path().join("e"), &[]);
    assert_eq!(code, 2);
    let (code, _) = run("spectrum", "{not json", &tmp.path().join("f"), &[]);
    assert_eq!(code, 2);

    let out = tmp.path().join("missing");
    let status = Command::new(env!("CARGO_BIN_EXE_degenctrl"))
        .args(["spectrum", "--config", "/nonexistent/config.json", "--out"])
        .arg(&out)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(4));
    assert_eq!(manifest(&out)["exit_code"], 4);

    let status = Command::new(env!("CARGO_BIN_EXE_degenctrl"))
        .args(["frobnicate", "--config", "x.json", "--out"])
        .arg(tmp.path().join("u"))
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));
    assert_eq!(manifest(&tmp.path().join("u"))["command"], "frobnicate");
}

#[test]
fn hum_non_convergence_exits_3() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = r#"{"alpha":0.5,"T_horizon":1.0,"n_r":60,"n_time":40,
        "hum":{"epsilon":1e-12,"cg_tol":1e-14,"max_iter":3}}"#;
    let (code, dir) = run("hum", cfg, &tmp.path().join("h"), &[]);
    assert_eq!(code, 3);
    let m = manifest(&dir);
    assert_eq!(m["status"], "not_converged");
    assert!(dir.join("hum_summary.json").exists());
}

#[test]
fn seed_flag_changes_random_output_only() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = r#"{"alpha":0.5,"T_horizon":1.0,"n_r":60,"n_time":20,
        "solve":{"initial":{"type":"random","radial_modes":4}}}"#;
    let read = |d: &Path| std::fs::read(d.join("solve.csv")).unwrap();
    let (_, a) = run("solve", cfg, &tmp.path().join("a"), &["--seed", "1"]);
    let (_, b) = run("solve", cfg, &tmp.path().join("b"), &["--seed", "1"]);
    let (_, c) = run("solve", cfg, &tmp.path().join("c"), &["--seed", "2"]);
    assert_eq!(read(&a), read(&b));
    assert_ne!(read(&a), read(&c));
    assert_eq!(manifest(&c)["seed"], 2);
}

#[test]
fn snapshot_outside_horizon_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = r#"{"alpha":0.5,"T_horizon":1.0,"n_r":40,"n_time":10,"solve":{"snapshots":[2.0]}}"#;
    let (code, dir) = run("solve", cfg, &tmp.path().join("s"), &[]);
    assert_eq!(code, 2);
    assert_eq!(manifest(&dir)["status"], "error");
}

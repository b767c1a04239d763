//! End-to-end invocations of the binary: exit codes, file outputs, JSON
//! shapes.

use std::path::{Path, PathBuf};
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_corrdesign"))
}

fn workdir(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("corrdesign-cli-{}-{name}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path
}

const LINEAR_EXP: &str = r#"{
  "version": 1,
  "basis": {"family": "monomial", "m": 2},
  "kernel": {"family": "exponential", "params": {"lambda": 0.5}},
  "criterion": {"kind": "D"},
  "solver": {"grid_n": 41, "max_iter": 30000, "conv_tol": 1e-6}
}"#;

#[test]
fn solve_writes_outputs_and_converges() {
    let dir = workdir("solve");
    let cfg = write_config(&dir, "cfg.json", LINEAR_EXP);
    let out = bin()
        .args(["solve", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.join("out"))
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["design.csv", "report.json", "trace.csv"] {
        assert!(dir.join("out").join(f).exists(), "missing {f}");
    }
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("out/report.json")).unwrap())
            .unwrap();
    assert_eq!(report["converged"], serde_json::Value::Bool(true));
    // provenance: the resolved configuration is embedded
    assert_eq!(report["config"]["version"], 1);
    assert_eq!(report["config"]["kernel"]["family"], "exponential");
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn solve_reports_not_converged_with_exit_4() {
    let dir = workdir("notconv");
    let cfg = write_config(
        &dir,
        "cfg.json",
        r#"{
          "version": 1,
          "basis": {"family": "monomial", "m": 2},
          "kernel": {"family": "exponential", "params": {"lambda": 0.5}},
          "solver": {"grid_n": 41, "max_iter": 3, "conv_tol": 1e-10}
        }"#,
    );
    let out = bin()
        .args(["solve", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.join("out"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stdout));
    // outputs are still written for inspection
    assert!(dir.join("out/design.csv").exists());
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn config_errors_exit_2() {
    let dir = workdir("badcfg");
    let cfg = write_config(
        &dir,
        "bad.json",
        r#"{"version": 1, "basis": {"family": "monomial", "m": 2},
            "kernel": {"family": "no_such_kernel", "params": {}}}"#,
    );
    let out = bin().args(["check", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(2));

    let missing = bin()
        .args(["check", "--config", "/nonexistent/x.json"])
        .output()
        .unwrap();
    assert_eq!(missing.status.code(), Some(2));

    let v2 = write_config(
        &dir,
        "v2.json",
        r#"{"version": 2, "basis": {"family": "monomial", "m": 2},
            "kernel": {"family": "exponential", "params": {"lambda": 1.0}}}"#,
    );
    let out = bin().args(["check", "--config"]).arg(&v2).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn check_emits_report_and_curves() {
    let dir = workdir("check");
    let cfg = write_config(&dir, "cfg.json", LINEAR_EXP);
    let out = bin()
        .args(["check", "--config"])
        .arg(&cfg)
        .args(["--design", "two_point", "--grid-n", "101"])
        .arg("--out")
        .arg(dir.join("out"))
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let curves = std::fs::read_to_string(dir.join("out/curves.csv")).unwrap();
    assert!(curves.lines().next().unwrap().starts_with("x,phi,b,psi,r"));
    assert_eq!(curves.lines().count(), 102);
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("out/report.json")).unwrap())
            .unwrap();
    assert!(report["universal"]["verdict"].is_string());
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn efficiency_prints_json() {
    let dir = workdir("eff");
    let cfg = write_config(&dir, "cfg.json", LINEAR_EXP);
    let out = bin()
        .args(["efficiency", "--config"])
        .arg(&cfg)
        .args(["--design", "uniform", "--design-n", "101", "--reference", "two_point"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let eff = v["efficiency"].as_f64().unwrap();
    assert!(eff > 0.0 && eff < 1.2, "eff = {eff}");
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn spectral_brownian_case() {
    let out = bin()
        .args(["spectral", "--case", "brownian", "--quad-n", "256"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let pairs = v["pairs"].as_array().unwrap();
    assert_eq!(pairs.len(), 3);
    for p in pairs {
        assert!(p["report"]["max_residual"].as_f64().unwrap() < 1e-8);
    }
}

#[test]
fn mc_oracle_with_inline_points() {
    let dir = workdir("mc");
    let cfg = write_config(&dir, "cfg.json", LINEAR_EXP);
    let out = bin()
        .args(["mc-oracle", "--config"])
        .arg(&cfg)
        .args(["--points", "-1,-0.5,0,0.5,1", "--n-rep", "20000", "--seed", "9"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let z = v["z_scores"].as_array().unwrap();
    for row in z {
        for entry in row.as_array().unwrap() {
            assert!(entry.as_f64().unwrap().abs() < 5.0);
        }
    }
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn tables_command_writes_csv() {
    let dir = workdir("tables");
    let out = bin()
        .args(["tables", "--id", "2"])
        .arg("--out")
        .arg(&dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(dir.join("table2.csv")).unwrap();
    assert!(text
        .lines()
        .next()
        .unwrap()
        .starts_with("model,parameter,design,computed,reference,delta"));
    assert_eq!(text.lines().count(), 6);
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn figures_command_writes_csv() {
    let dir = workdir("figures");
    let out = bin()
        .args(["figures", "--id", "4"])
        .arg("--out")
        .arg(&dir)
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = std::fs::read_to_string(dir.join("figure4.csv")).unwrap();
    assert!(text.lines().next().unwrap().starts_with("t,log_profile"));

    let bad = bin().args(["figures", "--id", "2"]).output().unwrap();
    assert_eq!(bad.status.code(), Some(2));
    std::fs::remove_dir_all(&dir).ok();
}

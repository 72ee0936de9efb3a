//! End-to-end runs of the `vmgeom` binary.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn vmgeom(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vmgeom")).args(args).env("RUST_LOG", "warn").output().expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_owned()
}

fn report(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("report.json")).unwrap()).unwrap()
}

#[test]
fn passing_run_writes_all_artifacts_and_exits_zero() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("gnh");
    let o = vmgeom(&["gnh-demo", "--out", out.to_str().unwrap(), "--seed", "7"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["config.toml", "report.json", "summary.json", "diagnostics.csv"] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
    let r = report(&out);
    assert_eq!(r["passed"], Value::Bool(true));
    assert_eq!(r["seed"], 7);
    assert!(!r["anchor"].as_str().unwrap().is_empty());
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.lines().last().unwrap().starts_with("PASS gnh_demo"));
    assert!(fs::read_to_string(out.join("config.toml")).unwrap().contains("seed = 7"));
}

#[test]
fn same_seed_gives_identical_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for d in [&a, &b] {
        assert!(vmgeom(&["bracket-check", "--out", d.to_str().unwrap()]).status.success());
    }
    for f in ["report.json", "summary.json", "diagnostics.csv", "config.toml"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f} differs");
    }
}

#[test]
fn written_config_reproduces_the_run() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert!(vmgeom(&["convergence", "--out", a.to_str().unwrap(), "--seed", "3"]).status.success());
    let cfg = a.join("config.toml");
    assert!(vmgeom(&["convergence", "--config", cfg.to_str().unwrap(), "--out", b.to_str().unwrap()]).status.success());
    assert_eq!(fs::read(a.join("report.json")).unwrap(), fs::read(b.join("report.json")).unwrap());
}

#[test]
fn invalid_values_are_named_and_exit_two() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "c.toml", "scenario = \"landau\"\n[landau]\ndt = -0.1\n");
    let o = vmgeom(&["landau", "--config", &cfg, "--out", tmp.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("dt"));
    assert!(!tmp.path().join("o").exists());
}

#[test]
fn unknown_keys_are_listed() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "c.toml", "[grid]\ndx = 0.1\nnx = 0\n");
    let o = vmgeom(&["landau", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("dx"), "{err}");
    assert!(err.contains("nx"), "{err}");
}

#[test]
fn syntax_errors_carry_a_position() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "c.toml", "seed = 1\n[grid\nnx = 4\n");
    let o = vmgeom(&["landau", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 2"));
}

#[test]
fn contradicting_scenario_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "c.toml", "scenario = \"two_stream\"\n");
    let o = vmgeom(&["landau", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("two_stream"));
}

#[test]
fn runaway_integration_is_reported_and_exits_one() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "c.toml", "[two_stream]\namplitude = 0.1\nt_end = 30.0\nfit_window = [20.0, 30.0]\n");
    let out = tmp.path().join("o");
    let o = vmgeom(&["two-stream", "--config", &cfg, "--resolution", "low", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let r = report(&out);
    assert_eq!(r["passed"], Value::Bool(false));
    assert!(r["error"].as_str().unwrap().contains("non-finite"));
}

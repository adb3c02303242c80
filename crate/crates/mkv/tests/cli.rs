use std::path::Path;
use std::process::{Command, Output};

use mkv::formats::{self, Payload};
use serde_json::Value;

fn mkv(cwd: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mkv")).args(args).current_dir(cwd).env_remove("MKV_DATA_DIR").output().expect("spawn mkv")
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))).unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn verify_trivial_passes() {
    let dir = tempfile::tempdir().unwrap();
    let o = mkv(dir.path(), &["verify", "--suite", "trivial"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let rep = json(&dir.path().join("mkv-out/verify/verify.json"));
    assert_eq!(rep["failed"], 0);
    assert!(rep["passed"].as_u64().unwrap() >= 50);
    assert_eq!(json(&dir.path().join("mkv-out/verify/manifest.json"))["status"], "ok");
}

#[test]
fn kernel_out_writes_a_valid_mkvg_file() {
    let dir = tempfile::tempdir().unwrap();
    let o = mkv(dir.path(), &["kernel", "--scenario", "constant.json", "--kernel-out", "k.mkvg"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let k = formats::read_path(&dir.path().join("k.mkvg")).unwrap();
    let Payload::Kernel { s, t_nodes, x_points } = &k.payload else { panic!("not a kernel file") };
    assert_eq!((*s, t_nodes.len(), x_points.as_slice()), (0.0, 16, &[0.0][..]));
    assert!(k.masses().iter().all(|m| (m - 1.0).abs() <= mkv_core::measures::MASS_TOL));
    let man = json(&dir.path().join("mkv-out/kernel/manifest.json"));
    assert_eq!(man["outputs"][0], "k.mkvg");
    assert_eq!(man["scenario_hash"].as_str().unwrap().len(), 64);
    assert_eq!(json(&dir.path().join("mkv-out/kernel/kernel.json"))["mass_check"], true);
}

#[test]
fn kernel_outputs_are_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    for out in ["a", "b"] {
        let o = mkv(dir.path(), &["kernel", "--scenario", "holder", "--x", "-0.5,0.5", "--times", "0.25,0.5", "--out", out]);
        assert_eq!(o.status.code(), Some(0));
    }
    for f in ["kernel.mkvg", "kernel.csv", "kernel.json"] {
        assert_eq!(std::fs::read(dir.path().join("a").join(f)).unwrap(), std::fs::read(dir.path().join("b").join(f)).unwrap(), "{f} differs");
    }
}

#[test]
fn failed_mass_check_exits_one_with_diagnosis() {
    let dir = tempfile::tempdir().unwrap();
    let o = mkv(dir.path(), &["kernel", "--tol", "1e-15", "--out", "run"]);
    assert_eq!(o.status.code(), Some(1));
    let diag = json(&dir.path().join("run/diagnosis.json"));
    assert_eq!(diag["category"], "verification_failed");
    let man = json(&dir.path().join("run/manifest.json"));
    assert_eq!(man["status"], "failed");
    // A later successful run in the same directory drops the stale diagnosis.
    assert_eq!(mkv(dir.path(), &["kernel", "--out", "run"]).status.code(), Some(0));
    assert!(!dir.path().join("run/diagnosis.json").exists());
}

#[test]
fn usage_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(mkv(dir.path(), &["bogus"]).status.code(), Some(2));
    assert_eq!(mkv(dir.path(), &["kernel", "--x"]).status.code(), Some(2));
    let o = mkv(dir.path(), &["nfpe", "--scenario", "no-such-scenario"]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(json(&dir.path().join("mkv-out/nfpe/manifest.json"))["status"], "usage_error");
    assert_eq!(json(&dir.path().join("mkv-out/nfpe/diagnosis.json"))["category"], "usage");
    std::fs::write(dir.path().join("bad.json"), r#"{"name": "constant", "sigmaa": 1}"#).unwrap();
    assert_eq!(mkv(dir.path(), &["kernel", "--scenario", "bad.json"]).status.code(), Some(2));
    std::fs::write(dir.path().join("range.json"), r#"{"name": "constant", "params": {"sigma": -1}}"#).unwrap();
    assert_eq!(mkv(dir.path(), &["kernel", "--scenario", "range.json"]).status.code(), Some(2));
    assert_eq!(mkv(dir.path(), &["example3", "--tol", "-1"]).status.code(), Some(2));
    assert_eq!(mkv(dir.path(), &["verify", "--threads", "0"]).status.code(), Some(2));
}

#[test]
fn example3_reports_both_fixed_points() {
    let dir = tempfile::tempdir().unwrap();
    let o = mkv(dir.path(), &["example3"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    for key in ["c1 = 0.954500", "c2 = 0.682689", "lambda1 =", "lambda2 =", "residual [W] =", "residual [2W] =", "d_phi([W], [2W]) ="] {
        assert!(text.contains(key), "missing {key} in\n{text}");
    }
    let rep = json(&dir.path().join("mkv-out/example3/example3.json"));
    assert!(rep["dphi"].as_f64().unwrap() >= 0.1 && rep["residual_w"].as_f64().unwrap() <= 1e-3);
}

#[test]
fn data_dir_env_sets_the_output_root() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_mkv")).args(["scenarios", "list"]).current_dir(dir.path()).env("MKV_DATA_DIR", "root").output().unwrap();
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("example4"));
    let lib = json(&dir.path().join("root/scenarios/scenarios.json"));
    assert_eq!(lib.as_array().unwrap().len(), mkv_core::scenarios::LIBRARY.len());
    assert!(dir.path().join("root/scenarios/manifest.json").exists());
}

#[test]
fn scenarios_show_resolves_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let o = mkv(dir.path(), &["scenarios", "show", "example3"]);
    assert_eq!(o.status.code(), Some(0));
    let v = json(&dir.path().join("mkv-out/scenarios/scenario.json"));
    assert_eq!(v["times"].as_array().unwrap().len(), 16);
    assert_eq!(v["entry"]["assumptions"][3], "no");
}

const SMALL: &str = r#"{"name": "example1", "cells": 48, "times": {"kind": "uniform", "n": 4}}"#;

#[test]
fn particles_are_reproducible_from_the_seed() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("s.json"), SMALL).unwrap();
    let run = |seed: &str, out: &str| {
        let o = mkv(dir.path(), &["particles", "--scenario", "s.json", "--n", "500", "--seed", seed, "--out", out]);
        assert_eq!(o.status.code(), Some(0));
        std::fs::read(dir.path().join(out).join("snapshots.csv")).unwrap()
    };
    let (a, b, c) = (run("7", "a"), run("7", "b"), run("8", "c"));
    assert_eq!(a, b);
    assert_ne!(a, c);
    let head = String::from_utf8_lossy(&a).lines().next().unwrap().to_string();
    assert_eq!(head, "time,particle_id,x0");
    assert_eq!(json(&dir.path().join("a/manifest.json"))["seed"], 7);
    assert_eq!(formats::read_path(&dir.path().join("a/flow.mkvg")).unwrap().version(), 3);
}

#[test]
fn fixpoint_nfpe_and_norms_run_on_a_small_scenario() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("s.json"), SMALL).unwrap();
    let o = mkv(dir.path(), &["fixpoint", "--scenario", "s.json", "--threads", "2"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let trace = std::fs::read_to_string(dir.path().join("mkv-out/fixpoint/trace.csv")).unwrap();
    assert!(trace.starts_with("iter,residual,wallclock_ms\n1,"));
    assert_eq!(json(&dir.path().join("mkv-out/fixpoint/fixpoint.json"))["converged"], true);

    let o = mkv(dir.path(), &["nfpe", "--scenario", "s.json", "--cells", "64", "--dt", "2e-3"]);
    assert_eq!(o.status.code(), Some(0));
    let flow = formats::read_path(&dir.path().join("mkv-out/nfpe/flow.mkvg")).unwrap();
    assert_eq!(flow.grid.cells, vec![64]);
    assert!(flow.masses().iter().all(|m| (m - 1.0).abs() < 1e-6));

    let o = mkv(dir.path(), &["norms", "--scenario", "s.json"]);
    assert_eq!(o.status.code(), Some(0));
    let n = json(&dir.path().join("mkv-out/norms/norms.json"));
    assert!(n["kato"]["value"].as_f64().unwrap() > 0.0 && n["lpq"].as_f64().unwrap() > 0.0);
}

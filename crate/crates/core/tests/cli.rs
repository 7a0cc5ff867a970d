use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn qjet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qjet")).args(args).output().expect("qjet starts")
}

fn run_in(dir: &Path, scenario: &str, extra: &[&str]) -> Output {
    let out = dir.to_str().unwrap();
    let mut args = vec!["run", scenario, "--output-dir", out];
    args.extend_from_slice(extra);
    qjet(&args)
}

fn write_scenario(dir: &TempDir, name: &str, text: &str) -> String {
    let path = dir.path().join(format!("{name}.toml"));
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

fn manifest(dir: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

const ENSEMBLE: &str = r#"
name = "small_ensemble"
description = "few particles"
target = "reproducible output"
task = "ensemble"
seed = 11

[initial]
kind = "free_gaussian"
a = 1.0
k0 = 1.0
x0 = -1.0

[ensemble]
count = 300
field = "analytic"
grid = { extent = [40.0], points = [512] }

[integrator]
dt = 0.02
t_final = 0.5
"#;

const DOUBLE_SLIT: &str = r#"
name = "small_slit"
description = "few particles behind two slits"
target = "a histogram is written"
task = "measurement"
seed = 5

[measurement]
mode = "double_slit"
separation = 6.0
slit_width = 1.0
detectors = true
count = 400
bins = 30

[integrator]
dt = 0.05
t_final = 4.0
"#;

const NODE_START: &str = r#"
name = "node_start"
description = "odd superposition started on its node"
target = "the run stops with a numerical error"
task = "trajectory"

[initial]
kind = "superposition"
terms = [[[1.0, 0.0], { kind = "free_gaussian", a = 1.0, k0 = 0.0, x0 = -1.0 }], [[-1.0, 0.0], { kind = "free_gaussian", a = 1.0, k0 = 0.0, x0 = 1.0 }]]

[jet]
truncation = 2
starts = [[0.0]]

[integrator]
t_final = 1.0
"#;

#[test]
fn builtin_trajectory_run() {
    let dir = TempDir::new().unwrap();
    let out = run_in(dir.path(), "free_gaussian", &["--truncation", "3"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("trajectories.csv")).unwrap();
    assert!(csv.starts_with("trajectory,"));
    assert!(csv.lines().count() > 4);
    let m = manifest(dir.path());
    assert_eq!(m["exit_code"], 0);
    assert_eq!(m["source"], "builtin:free_gaussian");
    assert_eq!(m["overrides"]["truncation"], 3);
    assert!(m["outputs"].as_array().unwrap().iter().any(|f| f == "trajectories.csv"));
}

#[test]
fn runs_are_reproducible() {
    let scratch = TempDir::new().unwrap();
    let path = write_scenario(&scratch, "ensemble", ENSEMBLE);
    let (a, b) = (TempDir::new().unwrap(), TempDir::new().unwrap());
    for dir in [&a, &b] {
        assert_eq!(run_in(dir.path(), &path, &[]).status.code(), Some(0));
    }
    for file in ["ensemble_initial.csv", "ensemble_final.csv"] {
        let first = std::fs::read(a.path().join(file)).unwrap();
        assert!(!first.is_empty());
        assert_eq!(first, std::fs::read(b.path().join(file)).unwrap(), "{file} differs");
    }
}

#[test]
fn detector_flag_overrides_file() {
    let scratch = TempDir::new().unwrap();
    let path = write_scenario(&scratch, "slit", DOUBLE_SLIT);
    let dir = TempDir::new().unwrap();
    let out = run_in(dir.path(), &path, &["--no-detectors"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let hist = std::fs::read_to_string(dir.path().join("fringe_histogram.csv")).unwrap();
    assert_eq!(hist.lines().count(), 31);
    assert_eq!(manifest(dir.path())["overrides"]["detectors"], false);
}

#[test]
fn verify_subset() {
    let scratch = TempDir::new().unwrap();
    let path = write_scenario(
        &scratch,
        "verify",
        "name = \"verify_three\"\ndescription = \"d\"\ntarget = \"t\"\ntask = \"verify\"\n\n[verify]\ncriteria = [3]\n",
    );
    let dir = TempDir::new().unwrap();
    let out = run_in(dir.path(), &path, &[]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("[PASS]"));
    assert!(dir.path().join("verify_report.json").is_file());
}

#[test]
fn node_start_is_numerical_failure() {
    let scratch = TempDir::new().unwrap();
    let path = write_scenario(&scratch, "node", NODE_START);
    let dir = TempDir::new().unwrap();
    let out = run_in(dir.path(), &path, &[]);
    assert_eq!(out.status.code(), Some(3));
    let m = manifest(dir.path());
    assert_eq!(m["exit_code"], 3);
    assert!(m["error"].as_str().unwrap().contains("vanishes"));
}

#[test]
fn unknown_key_is_config_error() {
    let scratch = TempDir::new().unwrap();
    let path = write_scenario(&scratch, "bad", &format!("{ENSEMBLE}\n[ensemble.extra]\nx = 1\n"));
    let bad = write_scenario(&scratch, "worse", &ENSEMBLE.replace("count = 300", "count = 300\ncolor = \"red\""));
    let dir = TempDir::new().unwrap();
    assert_eq!(run_in(dir.path(), &path, &[]).status.code(), Some(2));
    assert_eq!(run_in(dir.path(), &bad, &[]).status.code(), Some(2));
}

#[test]
fn list_and_describe() {
    let out = qjet(&["list"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).lines().count() >= 8);
    let out = qjet(&["describe", "larmor"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("task = \"spin\""));
    assert_eq!(qjet(&["describe", "nope"]).status.code(), Some(2));
    assert_eq!(qjet(&["run"]).status.code(), Some(2));
}

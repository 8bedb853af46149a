use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const BENCHMARK: &str = include_str!("../../../configs/benchmark.json");

fn delam(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_delam")).args(args).output().expect("binary runs")
}

fn small(dir: &Path, edit: impl Fn(String) -> String) -> String {
    let text = BENCHMARK
        .replace("\"n_interface\": 81", "\"n_interface\": 6")
        .replace("\"speed\": 3e-4", "\"speed\": 3e-3")
        .replace("\"tau\": 0.0022222222222222222", "\"tau\": 0.02")
        .replace("\"T\": 1.0", "\"T\": 0.12");
    let path = dir.join("config.json");
    fs::write(&path, edit(text)).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn validate_accepts_benchmark_and_reports_hash() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small(dir.path(), |t| t);
    let out = delam(&["validate-config", &cfg]);
    assert_eq!(out.status.code(), Some(0));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("config_hash="));
    assert!(stdout.contains("adhesive.eps_reg"));
}

#[test]
fn invalid_value_exits_one_with_path() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small(dir.path(), |t| t.replace("\"nu\": 0.35", "\"nu\": 0.5"));
    let out = delam(&["validate-config", &cfg]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8(out.stderr).unwrap().contains("material.nu"));
}

#[test]
fn empty_config_lists_missing_keys() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("empty.json");
    fs::write(&path, "{}").unwrap();
    let out = delam(&["validate-config", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8(out.stderr).unwrap();
    for key in ["geometry.L", "material.E", "adhesive.a_I", "loading.speed", "time.tau"] {
        assert!(stderr.contains(key), "{key} in {stderr}");
    }
}

#[test]
fn run_writes_outputs_and_guards_provenance() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small(dir.path(), |t| t);
    let results = dir.path().join("results");
    let out = delam(&["run", "--config", &cfg, "--out", results.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["energies.csv", "forces.csv", "mixity.csv", "meta.json"] {
        assert!(results.join(f).exists(), "{f}");
    }
    assert!(fs::read_dir(results.join("snapshots")).unwrap().count() > 0);

    let other = small(dir.path(), |t| t.replace("\"chi\": 1e-3", "\"chi\": 2e-3"));
    let out = delam(&["run", "--config", &other, "--out", results.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8(out.stderr).unwrap().contains("refusing"));
}

#[test]
fn solver_failure_exits_two_and_keeps_partial_results() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small(dir.path(), |t| t.replace("\"max_iter\": 1000", "\"max_iter\": 1"));
    let results = dir.path().join("results");
    let out = delam(&["run", "--config", &cfg, "--out", results.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
    let meta: serde_json::Value = serde_json::from_str(&fs::read_to_string(results.join("meta.json")).unwrap()).unwrap();
    assert_eq!(meta["status"], "failed");
}

#[test]
fn mesh_dump_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small(dir.path(), |t| t);
    let path = dir.path().join("mesh.csv");
    let out = delam(&["mesh-dump", "--config", &cfg, "--out", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert!(fs::read_to_string(&path).unwrap().lines().count() > 10);
    let out = delam(&["mesh-dump", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(0));
    assert!(!out.stdout.is_empty());
}

#[test]
fn converge_runs_levels() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small(dir.path(), |t| t);
    let results = dir.path().join("study");
    let out = delam(&[
        "--threads",
        "2",
        "converge",
        "--config",
        &cfg,
        "--levels",
        "3,6",
        "--out",
        results.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(results.join("level_3/energies.csv").exists());
    assert!(results.join("distances.csv").exists());
}

#[test]
fn unknown_subcommand_exits_one() {
    assert_eq!(delam(&["bogus"]).status.code(), Some(1));
}

//! End-to-end runs of the `ktrap` binary.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn ktrap(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ktrap"))
        .args(args)
        .env("KTRAP_OUTPUT_DIR", dir)
        .output()
        .expect("binary runs")
}

#[test]
fn arcsine_run_writes_table_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = ktrap(
        dir.path(),
        &["arcsine", "--alpha-hat", "0.5", "--grid", "1:1,3:1"],
    );
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let csv = fs::read_to_string(dir.path().join("arcsine.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next(),
        Some("t,s,ratio,kind,estimate,stderr,replicates,oracle")
    );
    let first: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(first[3], "arcsine");
    assert!((first[4].parse::<f64>().unwrap() - 0.5).abs() < 1e-10);
    let manifest: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.path().join("arcsine.manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["config"]["subcommand"], "arcsine");
    assert!(manifest["seed_derivation"]
        .as_str()
        .unwrap()
        .contains("mix64"));
}

#[test]
fn csv_bytes_do_not_depend_on_workers() {
    let run = |workers: &str| {
        let dir = tempfile::tempdir().unwrap();
        let out = ktrap(
            dir.path(),
            &[
                "aging",
                "--process",
                "zhat",
                "--alpha",
                "0.5",
                "--a",
                "0.2",
                "--replicates",
                "300",
                "--max-jumps",
                "200",
                "--grid",
                "1:1,1:2",
                "--seed",
                "17",
                "--workers",
                workers,
            ],
        );
        assert_eq!(
            out.status.code(),
            Some(0),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
        fs::read(dir.path().join("aging.csv")).unwrap()
    };
    assert_eq!(run("1"), run("8"));
}

#[test]
fn config_file_values_yield_to_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    fs::write(&cfg, r#"{"subcommand":"sim-zhat","alpha":0.5,"a":0.0,"horizon":1.0,"max_jumps":50,"master_seed":3}"#).unwrap();
    let out_dir = dir.path().join("out");
    let out = ktrap(
        &out_dir,
        &["--config", cfg.to_str().unwrap(), "--horizon", "2.5"],
    );
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let manifest: serde_json::Value =
        serde_json::from_slice(&fs::read(out_dir.join("sim-zhat.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config"]["horizon"], 2.5);
    let csv = fs::read_to_string(out_dir.join("sim-zhat.csv")).unwrap();
    assert!(csv.starts_with("time,value,kind\n0,"));
}

#[test]
fn invalid_configs_exit_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = ktrap(
        dir.path(),
        &["aging", "--alpha", "1.2", "--a", "0", "--grid", "1:1"],
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(
        String::from_utf8_lossy(&out.stderr).contains("(0,1)")
            || String::from_utf8_lossy(&out.stderr).contains("(0, 1)")
    );

    let cfg = dir.path().join("bad.json");
    fs::write(
        &cfg,
        r#"{"subcommand":"arcsine","alpha_hat":0.5,"t_s_grid":[[1,1]],"colour":"red"}"#,
    )
    .unwrap();
    let out = ktrap(dir.path(), &["--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("colour"));

    let out = ktrap(dir.path(), &["sim-trap"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(fs::read_dir(dir.path())
        .unwrap()
        .all(|e| e.unwrap().file_name() == "bad.json"));
}

#[test]
fn degenerate_limit_is_rejected_before_running() {
    let dir = tempfile::tempdir().unwrap();
    let out = ktrap(
        dir.path(),
        &["sim-zhat", "--alpha", "0.4", "--a", "0.6", "--horizon", "1"],
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("interrupted aging"));
    assert!(!dir.path().join("sim-zhat.csv").exists());
}

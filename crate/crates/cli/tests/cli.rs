//! Exit codes and file layout of the `otfilter` binary.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn otfilter(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_otfilter")).args(args).output().unwrap()
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("config.json");
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn validate_config_accepts_defaults_and_rejects_unknown_keys() {
    let dir = tempfile::tempdir().unwrap();
    let good = write_config(dir.path(), "{}");
    assert_eq!(otfilter(&["validate-config", &good]).status.code(), Some(0));

    let bad = dir.path().join("bad.json");
    fs::write(&bad, r#"{"N": 100, "ensemble": 3}"#).unwrap();
    let out = otfilter(&["validate-config", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("ensemble"));

    let missing = dir.path().join("missing.json");
    assert_eq!(otfilter(&["validate-config", missing.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn invalid_overrides_are_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"t_final": 0.2, "N": 5}"#);
    let out = dir.path().join("out");
    let status = otfilter(&["run", "--config", &cfg, "--runs", "0", "--out", out.to_str().unwrap()]).status;
    assert_eq!(status.code(), Some(2));
    assert!(!out.exists());
}

#[test]
fn run_writes_series_summary_and_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"t_final": 0.3, "N": 8, "runs": 5}"#);
    let out = dir.path().join("out");
    let o = otfilter(&[
        "run",
        "--config",
        &cfg,
        "--variant",
        "otnleqma",
        "--runs",
        "2",
        "--seed",
        "9",
        "--out",
        out.to_str().unwrap(),
        "--format",
        "csv",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let mut names: Vec<String> =
        fs::read_dir(&out).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    names.sort();
    assert_eq!(names, ["config.json", "run_0000_otnleqma.csv", "run_0001_otnleqma.csv", "summary.csv"]);
    let series = fs::read_to_string(out.join("run_0000_otnleqma.csv")).unwrap();
    assert_eq!(
        series.lines().next().unwrap(),
        "t,x_true,y_true,x_est,y_est,std_x,std_y,std_vx,std_vy,constraint_error"
    );
    assert_eq!(series.lines().count(), 1 + 6);
    let echoed = fs::read_to_string(out.join("config.json")).unwrap();
    assert!(echoed.contains("\"runs\": 2") && echoed.contains("\"base_seed\": 9"));
}

#[test]
fn unwritable_output_is_a_runtime_failure() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"t_final": 0.1, "N": 4, "runs": 1}"#);
    let blocker = dir.path().join("blocker");
    fs::write(&blocker, b"").unwrap();
    let o = otfilter(&["run", "--config", &cfg, "--out", blocker.join("out").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn sample_writes_proposal_samples_and_diagnostics() {
    let dir = tempfile::tempdir().unwrap();
    for (target, extra) in [("bimodal", None), ("annulus", None), ("annulus", Some("disk"))] {
        let out = dir.path().join(format!("{target}-{}", extra.unwrap_or("default")));
        let mut args =
            vec!["sample", "--target", target, "--n", "60", "--seed", "3", "--out", out.to_str().unwrap()];
        if let Some(p) = extra {
            args.extend(["--proposal", p]);
        }
        let o = otfilter(&args);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
        let samples = fs::read_to_string(out.join("samples.csv")).unwrap();
        assert_eq!(samples.lines().count(), 61);
        let diag: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(out.join("diagnostics.json")).unwrap()).unwrap();
        assert_eq!(diag["hull_membership"], 1.0);
        assert_eq!(diag["annulus_coverage"].is_null(), target == "bimodal");
    }
}

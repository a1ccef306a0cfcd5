//! End-to-end checks of the command-line interface: files land where they
//! should, formats round-trip, and identical invocations produce identical
//! bytes.

use std::fs;
use std::path::Path;
use std::process::Command;

fn cli() -> Command {
    Command::new(env!("CARGO_BIN_EXE_vsn-sm"))
}

fn write_small_config(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("config.json");
    fs::write(
        &path,
        r#"{
  "n_cameras": 4,
  "n_active_events": 2,
  "n_potential_events": 8,
  "dataset_size": 300,
  "p_detect": 1.0,
  "p_classify": 1.0,
  "conf_floor": 0.9,
  "search_max": 4,
  "methods": ["vgmm"]
}"#,
    )
    .unwrap();
    path
}

#[test]
fn gen_writes_model_and_both_dataset_forms() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_small_config(dir.path());
    let out = dir.path().join("data");
    let status = cli()
        .args(["gen", "--config"])
        .arg(&config)
        .args(["--seed", "5", "--out"])
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    for name in ["model.json", "dataset.csv", "dataset.json"] {
        assert!(out.join(name).exists(), "{name} missing");
    }
    let csv = fs::read_to_string(out.join("dataset.csv")).unwrap();
    assert!(csv.starts_with("# n_cameras=4 n_obs=300"));
}

#[test]
fn identify_consumes_generated_dataset_and_scores_it() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_small_config(dir.path());
    let data = dir.path().join("data");
    assert!(cli()
        .args(["gen", "--config"])
        .arg(&config)
        .args(["--seed", "5", "--out"])
        .arg(&data)
        .status()
        .unwrap()
        .success());
    let out = dir.path().join("reports");
    let status = cli()
        .args(["identify", "--config"])
        .arg(&config)
        .args(["--dataset"])
        .arg(data.join("dataset.csv"))
        .args(["--model"])
        .arg(data.join("model.json"))
        .args(["--seed", "9", "--out"])
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let metrics: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("metrics-vgmm.json")).unwrap()).unwrap();
    assert_eq!(metrics["e_r"], 0.0);
}

#[test]
fn metrics_subcommand_matches_identify_output() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_small_config(dir.path());
    let data = dir.path().join("data");
    let reports = dir.path().join("reports");
    for step in [
        vec!["gen", "--seed", "5"],
        vec!["identify", "--seed", "9"],
    ] {
        let mut cmd = cli();
        cmd.arg(step[0]).arg("--config").arg(&config);
        if step[0] == "identify" {
            cmd.arg("--dataset")
                .arg(data.join("dataset.csv"))
                .args(["--out"])
                .arg(&reports);
        } else {
            cmd.arg("--out").arg(&data);
        }
        cmd.args(&step[1..]);
        assert!(cmd.status().unwrap().success());
    }
    let metrics_file = dir.path().join("metrics.json");
    let status = cli()
        .args(["metrics", "--model"])
        .arg(data.join("model.json"))
        .args(["--report"])
        .arg(reports.join("report-vgmm.json"))
        .args(["--out"])
        .arg(&metrics_file)
        .status()
        .unwrap();
    assert!(status.success());
    let metrics: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&metrics_file).unwrap()).unwrap();
    assert!(metrics["e_r"].is_number());
    assert!(metrics["m_hat_eff"].is_number());
}

#[test]
fn repeated_invocations_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_small_config(dir.path());
    let mut snapshots: Vec<Vec<(String, Vec<u8>)>> = Vec::new();
    for round in 0..2 {
        let out = dir.path().join(format!("round{round}"));
        assert!(cli()
            .args(["single", "--config"])
            .arg(&config)
            .args(["--seed", "33", "--out"])
            .arg(&out)
            .status()
            .unwrap()
            .success());
        assert!(cli()
            .args(["mc", "--config"])
            .arg(&config)
            .args(["--runs", "2", "--seed", "33", "--out"])
            .arg(out.join("mc"))
            .status()
            .unwrap()
            .success());
        let mut files = Vec::new();
        for entry in walk(&out) {
            files.push((
                entry
                    .strip_prefix(&out)
                    .unwrap()
                    .to_string_lossy()
                    .into_owned(),
                fs::read(&entry).unwrap(),
            ));
        }
        files.sort();
        snapshots.push(files);
    }
    assert_eq!(snapshots[0].len(), snapshots[1].len());
    for (a, b) in snapshots[0].iter().zip(&snapshots[1]) {
        assert_eq!(a.0, b.0);
        assert_eq!(a.1, b.1, "file {} differs between runs", a.0);
    }
}

fn walk(dir: &Path) -> Vec<std::path::PathBuf> {
    let mut files = Vec::new();
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.is_dir() {
            files.extend(walk(&path));
        } else {
            files.push(path);
        }
    }
    files
}

#[test]
fn unknown_method_fails_with_diagnostic() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_small_config(dir.path());
    let output = cli()
        .args(["single", "--config"])
        .arg(&config)
        .args(["--methods", "kmeans", "--out"])
        .arg(dir.path().join("x"))
        .output()
        .unwrap();
    assert!(!output.status.success());
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("kmeans"), "stderr: {stderr}");
}

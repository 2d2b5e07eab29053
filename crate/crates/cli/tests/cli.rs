//! End-to-end checks of the command line surface.

use std::path::Path;
use std::process::Command;

fn dcaug() -> Command {
    Command::new(env!("CARGO_BIN_EXE_dcaug"))
}

fn write_config(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("config.json");
    std::fs::write(
        &path,
        r#"{
            "dataset": {
                "domains": [
                    {"background": [70, 34, 30], "background_alt": [110, 55, 42], "hue_shift": 0.0, "texture": "solid", "stroke": 2},
                    {"background": [24, 38, 82], "background_alt": [44, 66, 120], "hue_shift": 120.0, "texture": "stripes", "stroke": 3},
                    {"background": [30, 66, 38], "background_alt": [52, 96, 60], "hue_shift": 240.0, "texture": "noise", "stroke": 2}
                ],
                "classes": 5,
                "side": 12,
                "samples_per_domain": 15
            },
            "steps": 5,
            "batch_per_domain": 3,
            "seeds": [0],
            "model": {"hidden": 8, "ema_beta": 0.99},
            "checkpoint_percent": 50
        }"#,
    )
    .unwrap();
    path
}

#[test]
fn run_then_report_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path());
    let out = dir.path().join("out");
    let status = dcaug()
        .args(["run", "--config"])
        .arg(&config)
        .args(["--variant", "label", "--holdout", "0", "--out"])
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    assert!(out.join("results.csv").exists());
    assert!(out.join("summary.json").exists());
    assert!(out.join("selections_h0_s0.jsonl").exists());
    assert!(out.join("checkpoint_h0_s0.bin").exists());

    let figs = dir.path().join("figs");
    let status = dcaug()
        .args(["report", "--results"])
        .arg(&out)
        .arg("--out")
        .arg(&figs)
        .status()
        .unwrap();
    assert!(status.success());
    assert!(figs.join("fig_rejection.csv").exists());
}

#[test]
fn generate_writes_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path());
    let out = dir.path().join("data");
    let status = dcaug()
        .args(["generate", "--config"])
        .arg(&config)
        .args(["--seed", "3", "--out"])
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    assert!(out.join("manifest.json").exists());
    assert!(out.join("domain_0").exists());
}

#[test]
fn dump_grid_writes_png() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("grid.png");
    let status = dcaug()
        .args(["dump-grid", "--space", "wider", "--side", "16", "--out"])
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    assert!(out.exists());
}

#[test]
fn invalid_config_fails_with_field_path() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(&path, r#"{"steps": 0}"#).unwrap();
    let output = dcaug()
        .args(["run", "--config"])
        .arg(&path)
        .args(["--out"])
        .arg(dir.path().join("out"))
        .output()
        .unwrap();
    assert!(!output.status.success());
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("steps"), "stderr: {stderr}");
}

#[test]
fn sweep_emits_grid_and_selection() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path());
    let out = dir.path().join("sweep");
    let status = dcaug()
        .args(["sweep", "--config"])
        .arg(&config)
        .args(["--lambdas", "0.2,0.8", "--holdout", "1", "--out"])
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    assert!(out.join("sweep.csv").exists());
    assert!(out.join("selected.csv").exists());
    let grid = std::fs::read_to_string(out.join("sweep.csv")).unwrap();
    assert_eq!(grid.lines().count(), 3); // header + 2 lambdas
}

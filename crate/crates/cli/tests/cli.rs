//! End-to-end command-line tests driving the compiled binary.

use std::path::Path;
use std::process::{Command, Output};

fn echoseg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_echoseg"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn assert_success(out: &Output, context: &str) {
    assert!(
        out.status.success(),
        "{context} failed\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn full_pipeline_smoke() {
    let root = tempfile::tempdir().unwrap();
    let data = root.path().join("data");
    let run = root.path().join("run");
    let eval = root.path().join("eval");
    let scen = root.path().join("scen");
    let report = root.path().join("report");
    let data_s = data.to_str().unwrap();

    // Tiny corpus: 6 patients x 2 frames at 32x32.
    let params = root.path().join("params.json");
    std::fs::write(
        &params,
        serde_json::json!({
            "image_size": 32,
            "cavity_axes": [6.7, 4.3],
            "cavity_center": [17.6, 16.0],
            "sector_angle": 72.0,
            "speckle_strength": 0.25,
            "border_dropout_prob": 0.1,
            "operator_b_perturbation": 1.06
        })
        .to_string(),
    )
    .unwrap();
    assert_success(
        &echoseg(&[
            "synth-gen",
            "--patients", "6",
            "--frames-per-patient", "2",
            "--seed", "5",
            "--out", data_s,
            "--params", params.to_str().unwrap(),
        ]),
        "synth-gen",
    );
    assert!(data.join("manifest.csv").is_file());
    assert!(data.join("params.json").is_file());
    assert!(data.join("p000/p000_f00_img.png").is_file());

    let manifest = data.join("manifest.csv");
    assert_success(
        &echoseg(&["split", "--manifest", manifest.to_str().unwrap(), "--seed", "3"]),
        "split",
    );
    let manifest_text = std::fs::read_to_string(&manifest).unwrap();
    assert!(manifest_text.contains("train") && manifest_text.contains("test"));

    assert_success(
        &echoseg(&[
            "train",
            "--variant", "unet1",
            "--operator", "A",
            "--data", data_s,
            "--epochs", "2",
            "--lr", "0.001",
            "--batch", "4",
            "--scale", "0.25",
            "--seed", "1",
            "--out", run.to_str().unwrap(),
        ]),
        "train",
    );
    for artifact in ["config.txt", "history.csv", "best.ckpt", "last.ckpt", "history.png", "cli_config.json"] {
        assert!(run.join(artifact).is_file(), "missing run artifact {artifact}");
    }

    let ckpt = run.join("best.ckpt");
    assert_success(
        &echoseg(&[
            "evaluate",
            "--checkpoint", ckpt.to_str().unwrap(),
            "--data", data_s,
            "--split", "test",
            "--operator", "A",
            "--out", eval.to_str().unwrap(),
        ]),
        "evaluate",
    );
    assert!(eval.join("metrics.csv").is_file());
    let overlays: Vec<_> = std::fs::read_dir(eval.join("overlays")).unwrap().collect();
    assert!(!overlays.is_empty(), "evaluate writes overlay PNGs");

    // Smoke run reuses the single model's predictions for both operators.
    assert_success(
        &echoseg(&[
            "scenarios",
            "--pred-oa", eval.to_str().unwrap(),
            "--pred-ob", eval.to_str().unwrap(),
            "--data", data_s,
            "--out", scen.to_str().unwrap(),
            "--pred-unet", eval.to_str().unwrap(),
            "--pred-unet1", eval.to_str().unwrap(),
            "--pred-unet2", eval.to_str().unwrap(),
        ]),
        "scenarios",
    );
    assert!(scen.join("scenarios.csv").is_file());
    assert!(scen.join("benchmark.csv").is_file());
    assert!(scen.join("flagged.csv").is_file());

    assert_success(
        &echoseg(&[
            "report",
            "--benchmark", scen.join("benchmark.csv").to_str().unwrap(),
            "--scenarios", scen.join("scenarios.csv").to_str().unwrap(),
            "--overlays", eval.join("overlays").to_str().unwrap(),
            "--out", report.to_str().unwrap(),
        ]),
        "report",
    );
    let md = std::fs::read_to_string(report.join("report.md")).unwrap();
    assert!(md.contains("## Models"));
    assert!(md.contains("## Compared scenarios"));
    assert!(report.join("overlays").read_dir().unwrap().count() > 0);

    // Determinism: regenerating the dataset gives identical bytes.
    let data2 = root.path().join("data2");
    assert_success(
        &echoseg(&[
            "synth-gen",
            "--patients", "6",
            "--frames-per-patient", "2",
            "--seed", "5",
            "--out", data2.to_str().unwrap(),
            "--params", params.to_str().unwrap(),
        ]),
        "synth-gen (again)",
    );
    let a = std::fs::read(data.join("p003/p003_f01_img.png")).unwrap();
    let b = std::fs::read(data2.join("p003/p003_f01_img.png")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn split_requires_three_ratios() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = dir.path().join("manifest.csv");
    std::fs::write(&manifest, "patient_id,frame_id,split\np0,p0_f0,\n").unwrap();
    let out = echoseg(&[
        "split",
        "--manifest", manifest.to_str().unwrap(),
        "--ratios", "0.5,0.5",
    ]);
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("three"), "stderr: {stderr}");
}

#[test]
fn unknown_flag_exits_one_with_usage() {
    let out = echoseg(&["synth-gen", "--bogus", "1"]);
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.to_lowercase().contains("usage"), "stderr: {stderr}");
}

#[test]
fn missing_input_exits_one() {
    let out = echoseg(&[
        "evaluate",
        "--checkpoint", "/nonexistent/model.ckpt",
        "--data", "/nonexistent",
        "--operator", "A",
        "--out", "/tmp/echoseg-nowhere",
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn help_exits_zero_and_train_defaults_are_the_protocol() {
    let out = echoseg(&["--help"]);
    assert_eq!(out.status.code(), Some(0));

    let out = echoseg(&["train", "--help"]);
    assert_eq!(out.status.code(), Some(0));
    let help = String::from_utf8_lossy(&out.stdout);
    assert!(help.contains("0.00001"), "lr default visible: {help}");
    assert!(help.contains("250"), "epoch default visible");
    assert!(help.contains("8"), "batch default visible");
}

#[test]
fn unsupported_device_env_is_rejected() {
    let out = Command::new(env!("CARGO_BIN_EXE_echoseg"))
        .args(["synth-gen", "--patients", "1", "--frames-per-patient", "1", "--out", "/tmp/x"])
        .env("ECHOSEG_DEVICE", "cuda:0")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("cpu"));
}

#[test]
fn idempotent_outputs_on_same_seed() {
    let root = tempfile::tempdir().unwrap();
    let data = root.path().join("d");
    for _ in 0..2 {
        assert_success(
            &echoseg(&[
                "synth-gen",
                "--patients", "2",
                "--frames-per-patient", "1",
                "--seed", "9",
                "--size", "32",
                "--out", data.to_str().unwrap(),
            ]),
            "synth-gen",
        );
    }
    let _ = Path::new("unused");
}

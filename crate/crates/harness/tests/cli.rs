use std::path::Path;
use std::process::{Command, Output};

use aoreg_harness::experiments::preset_align;

fn aoreg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_aoreg"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout_value(out: &Output, key: &str) -> f64 {
    let text = String::from_utf8_lossy(&out.stdout);
    text.lines()
        .find_map(|l| l.strip_prefix(&format!("{key} = ")))
        .unwrap_or_else(|| panic!("no {key} in {text}"))
        .trim()
        .parse()
        .unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn bad_config_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, "d_sub = 40\nwobble = 3\n").unwrap();
    let out = aoreg(&["--config", path(&cfg), "exp", "preset-align"]);
    assert_eq!(
        out.status.code(),
        Some(2),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(String::from_utf8_lossy(&out.stderr).contains("wobble"));
}

#[test]
fn unknown_experiment_is_rejected() {
    assert_eq!(aoreg(&["exp", "tea-leaves"]).status.code(), Some(2));
}

#[test]
fn missing_input_file_fails() {
    let out = aoreg(&["estimate-cl", "/nonexistent/batch.aotc"]);
    assert!(!out.status.success());
}

#[test]
fn synthetic_im_round_trip_through_files() {
    let dir = tempfile::tempdir().unwrap();
    let reference = dir.path().join("ref.aoim");
    let measured = dir.path().join("meas.aoim");
    assert!(aoreg(&["synth-im", "--out", path(&reference)])
        .status
        .success());
    let out = aoreg(&[
        "synth-im",
        "--shift-x",
        "2.25",
        "--shift-y",
        "-1.5",
        "--noise-px",
        "0.1",
        "--out",
        path(&measured),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let out = aoreg(&["estimate-modal", path(&measured), path(&reference)]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!((stdout_value(&out, "shift_x") - 2.25).abs() <= 0.125);
    assert!((stdout_value(&out, "shift_y") + 1.5).abs() <= 0.125);
    assert!((stdout_value(&out, "amplitude_um") - 4.0).abs() < 0.2);
}

#[test]
fn simulated_telemetry_feeds_the_closed_loop_estimator() {
    let dir = tempfile::tempdir().unwrap();
    let tel = dir.path().join("batch.aotc");
    let out = aoreg(&[
        "simulate",
        "--shift-x",
        "0.3",
        "--frames",
        "1000",
        "--out",
        path(&tel),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let out = aoreg(&["estimate-cl", path(&tel)]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let (x, y) = (stdout_value(&out, "shift_x"), stdout_value(&out, "shift_y"));
    assert!(x > 0.1 && x < 0.3, "{x}");
    assert!(y.abs() < 0.05, "{y}");
}

#[test]
fn experiment_output_is_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert!(aoreg(&[
        "exp",
        "preset-align",
        "--seed",
        "5",
        "--out",
        path(a.path())
    ])
    .status
    .success());
    assert!(aoreg(&[
        "exp",
        "preset-align",
        "--seed",
        "5",
        "--no-plots",
        "--out",
        path(b.path())
    ])
    .status
    .success());
    let csv_a = std::fs::read(a.path().join("preset-align.csv")).unwrap();
    let csv_b = std::fs::read(b.path().join("preset-align.csv")).unwrap();
    assert_eq!(csv_a, csv_b);
    let header = String::from_utf8_lossy(&csv_a)
        .lines()
        .next()
        .unwrap()
        .to_string();
    assert_eq!(header, preset_align::COLUMNS.join(","));
    assert!(a.path().join("preset-align_convergence.png").exists());
    assert!(!b.path().join("preset-align_convergence.png").exists());
}

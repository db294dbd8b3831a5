//! CLI surface tests: file round trips, error diagnostics, exit codes, and
//! byte-identical reruns.

use std::path::Path;
use std::process::{Command, Output};

use tempfile::tempdir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_spectral-inform"))
}

fn run_ok(args: &[&str]) -> Output {
    let out = bin().args(args).output().expect("spawn CLI");
    assert!(
        out.status.success(),
        "command {:?} failed:\n{}",
        args,
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn read_dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().to_string(), std::fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort_by(|a, b| a.0.cmp(&b.0));
    files
}

#[test]
fn simulate_writes_readable_matrix() {
    let dir = tempdir().unwrap();
    let out = dir.path().join("m.spnm");
    run_ok(&[
        "simulate", "--n", "24", "--seed", "5", "--theta", "3", "--out",
        out.to_str().unwrap(),
    ]);
    let a = spectral_inform::matio::read_auto(&out).unwrap();
    assert_eq!(a.dim(), (24, 24));

    let csv = dir.path().join("m.csv");
    run_ok(&[
        "simulate", "--n", "12", "--m", "18", "--seed", "5", "--out",
        csv.to_str().unwrap(), "--format", "csv",
    ]);
    let b = spectral_inform::matio::read_auto(&csv).unwrap();
    assert_eq!(b.dim(), (12, 18));
}

#[test]
fn detect_finds_planted_spike() {
    let dir = tempdir().unwrap();
    let data = dir.path().join("data.spnm");
    run_ok(&[
        "simulate", "--n", "64", "--seed", "11", "--theta", "5", "--out",
        data.to_str().unwrap(),
    ]);
    let report = dir.path().join("report.json");
    run_ok(&[
        "detect", "--input", data.to_str().unwrap(), "--seed", "11", "--ncal", "40",
        "--alpha", "0.05", "--out", report.to_str().unwrap(),
    ]);
    let parsed: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(parsed["estimated_rank"], 1);
    assert_eq!(parsed["informative_indices"][0], 1);
}

#[test]
fn zero_matrix_detects_nothing() {
    let dir = tempdir().unwrap();
    let data = dir.path().join("zeros.csv");
    let zeros = ndarray::Array2::<f64>::zeros((32, 32));
    spectral_inform::matio::write_csv(&data, &zeros).unwrap();
    let out = run_ok(&[
        "detect", "--input", data.to_str().unwrap(), "--seed", "3", "--ncal", "40",
        "--alpha", "0.05",
    ]);
    let parsed: serde_json::Value =
        serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(parsed["estimated_rank"], 0);
}

#[test]
fn corrupt_input_fails_with_diagnostic() {
    let dir = tempdir().unwrap();
    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "1.0,2.0\n3.0,not_a_number\n").unwrap();
    let out = bin()
        .args(["detect", "--input", bad.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 2"), "missing position diagnostic: {err}");
}

#[test]
fn estimate_reconstructs_spike() {
    let dir = tempdir().unwrap();
    let data = dir.path().join("data.spnm");
    run_ok(&[
        "simulate", "--n", "64", "--seed", "21", "--theta", "6", "--out",
        data.to_str().unwrap(),
    ]);
    let rec = dir.path().join("rec.spnm");
    let report = dir.path().join("report.json");
    run_ok(&[
        "estimate", "--input", data.to_str().unwrap(), "--seed", "21", "--ncal", "40",
        "--alpha", "0.05", "--out", rec.to_str().unwrap(), "--report-out",
        report.to_str().unwrap(),
    ]);
    let a = spectral_inform::matio::read_auto(&rec).unwrap();
    let values = spectral_inform::spectrum_of(&a).unwrap();
    assert!(values[0] > 5.0, "reconstruction lost the spike: {}", values[0]);
    assert_eq!(spectral_inform::linalg::numerical_rank(&values, 1e-10), 1);
}

#[test]
fn predict_emits_rows_with_thresholds() {
    let dir = tempdir().unwrap();
    let out = dir.path().join("pred.json");
    run_ok(&[
        "predict", "--n", "200", "--seed", "9", "--ncal", "30", "--theta", "2",
        "--theta", "4", "--geometry", "svd", "--out", out.to_str().unwrap(),
    ]);
    let parsed: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert!(parsed["caveat"].as_str().unwrap().contains("finite-n"));
    let rows = parsed["predictions"].as_array().unwrap();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0]["i"], 1);
    assert_eq!(rows[0]["j"], 1);
    assert!(rows[0]["thresholds"]["lower"].is_number());
}

#[test]
fn figure6_is_cheap_and_deterministic() {
    let d1 = tempdir().unwrap();
    let d2 = tempdir().unwrap();
    run_ok(&["reproduce-figure", "--id", "fig6", "--outdir", d1.path().to_str().unwrap()]);
    run_ok(&["reproduce-figure", "--id", "fig6", "--outdir", d2.path().to_str().unwrap()]);
    let f1 = read_dir_bytes(d1.path());
    let f2 = read_dir_bytes(d2.path());
    assert_eq!(f1.len(), 3);
    assert_eq!(f1, f2, "fig6 outputs are not byte-identical");
    // the theta = inf sentinel disables the intersection line
    let d3 = tempdir().unwrap();
    run_ok(&[
        "reproduce-figure", "--id", "fig6", "--outdir", d3.path().to_str().unwrap(),
        "--theta", "inf",
    ]);
    let eig = std::fs::read_to_string(d3.path().join("fig6_eigenvalues.csv")).unwrap();
    assert_eq!(eig.lines().count(), 1, "pure pole plot should list no intersections");
}

#[test]
fn unknown_figure_id_is_rejected() {
    let dir = tempdir().unwrap();
    let out = bin()
        .args(["reproduce-figure", "--id", "fig9", "--outdir", dir.path().to_str().unwrap()])
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("fig9"));
}

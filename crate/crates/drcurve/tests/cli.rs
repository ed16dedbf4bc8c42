//! End-to-end CLI contract: subcommands, file outputs, exit codes
//! (0 success, 1 internal error, 2 success with undefined cells,
//! 3 argument error), environment overrides.

use std::path::Path;
use std::process::{Command, Output};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_drcurve")
}

fn run(args: &[&str]) -> Output {
    Command::new(bin()).args(args).output().unwrap()
}

fn simulate_into(dir: &Path, system: &str, n: usize, seed: u64) -> (String, String) {
    let csv = dir.join(format!("{system}.csv"));
    let out = Command::new(bin())
        .args(["simulate", "--system", system, "--n", &n.to_string(), "--seed", &seed.to_string()])
        .arg("--out")
        .arg(&csv)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "simulate failed: {:?}", out);
    (
        csv.to_string_lossy().to_string(),
        dir.join(format!("{system}.schema.json")).to_string_lossy().to_string(),
    )
}

#[test]
fn help_and_version_exit_zero() {
    assert_eq!(run(&["--help"]).status.code(), Some(0));
    assert_eq!(run(&["--version"]).status.code(), Some(0));
}

#[test]
fn argument_errors_exit_three() {
    // unknown subcommand
    assert_eq!(run(&["frobnicate"]).status.code(), Some(3));
    // unknown system lists valid ids
    let out = run(&["simulate", "--system", "sim9", "--n", "10", "--out", "/tmp/x.csv"]);
    assert_eq!(out.status.code(), Some(3));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("sim1") && stderr.contains("sim3"), "stderr: {stderr}");
    // n = 0
    assert_eq!(
        run(&["simulate", "--system", "sim1", "--n", "0", "--out", "/tmp/x.csv"]).status.code(),
        Some(3)
    );
}

#[test]
fn simulate_writes_csv_schema_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let (csv, schema) = simulate_into(dir.path(), "sim1", 200, 9);
    assert!(Path::new(&csv).exists());
    assert!(Path::new(&schema).exists());
    assert!(dir.path().join("sim1.manifest.json").exists());
    // sim1: 2 covariates + treatment + outcome over 3 time points
    let header = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(header.lines().next().unwrap().split(',').count(), 12);
    assert_eq!(header.lines().count(), 201);
}

#[test]
fn estimate_weighted_needs_c() {
    let dir = tempfile::tempdir().unwrap();
    let (csv, schema) = simulate_into(dir.path(), "sim1", 200, 9);
    let out = run(&[
        "estimate", "--data", &csv, "--schema", &schema, "--grid", "5:7:1", "--estimand",
        "weighted", "--out-dir",
        dir.path().join("out").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(3), "stderr: {}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn estimate_sequential_writes_curve_without_c() {
    let dir = tempfile::tempdir().unwrap();
    let (csv, schema) = simulate_into(dir.path(), "sim1", 400, 9);
    let out_dir = dir.path().join("out");
    let out = run(&[
        "estimate", "--data", &csv, "--schema", &schema, "--grid", "6:8:1", "--estimand",
        "cdrc_sequential", "--learners", "ols", "--folds", "5", "--seed", "3", "--out-dir",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let curve = std::fs::read_to_string(out_dir.join("curve_cdrc_sequential.csv")).unwrap();
    let mut lines = curve.lines();
    let header = lines.next().unwrap();
    assert_eq!(header, "trajectory_label,time,estimand,c,value,undefined_flag,run_id");
    // c column empty for the unweighted estimand
    let first = lines.next().unwrap();
    let fields: Vec<&str> = first.split(',').collect();
    assert_eq!(fields[3], "");
    assert!(out_dir.join("manifest.json").exists());
}

#[test]
fn estimate_weighted_emits_records_and_bands() {
    let dir = tempfile::tempdir().unwrap();
    let (csv, schema) = simulate_into(dir.path(), "sim1", 300, 5);
    let out_dir = dir.path().join("out");
    let out = run(&[
        "estimate", "--data", &csv, "--schema", &schema, "--grid-values", "6,7", "--estimand",
        "weighted", "--c", "0.001,0.01", "--variant", "simple", "--learners", "ols", "--folds",
        "5", "--bootstrap", "50", "--seed", "3", "--out-dir",
        out_dir.to_str().unwrap(),
    ]);
    assert!(
        out.status.code() == Some(0) || out.status.code() == Some(2),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    for c in ["0.001", "0.01"] {
        assert!(out_dir.join(format!("curve_weighted_c{c}.csv")).exists());
        assert!(out_dir.join(format!("weight_records_c{c}.csv")).exists());
        assert!(out_dir.join(format!("bands_weighted_c{c}.csv")).exists());
    }
    let records =
        std::fs::read_to_string(out_dir.join("weight_records_c0.01.csv")).unwrap();
    assert!(records.lines().next().unwrap().starts_with("unit,t,trajectory,c,weight,branch,num,den"));
}

#[test]
fn diagnose_writes_surfaces_and_errors_on_tiny_data() {
    let dir = tempfile::tempdir().unwrap();
    let (csv, schema) = simulate_into(dir.path(), "sim1", 500, 7);
    let out_dir = dir.path().join("diag");
    let out = run(&[
        "diagnose", "--data", &csv, "--schema", &schema, "--grid", "5:8:1", "--c-grid",
        "0.001,0.01,0.025,0.2,1", "--out-dir",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let prop = std::fs::read_to_string(out_dir.join("weight_proportions.csv")).unwrap();
    assert!(prop.lines().next().unwrap().starts_with("c,trajectory_label,time,proportion,category"));
    // 5 c-values x 4 trajectories x (3 times + visit-averaged) + header
    assert_eq!(prop.lines().count(), 1 + 5 * 4 * 4);
    assert!(out_dir.join("binned_support.csv").exists());

    // n < 20: density fitting impossible, error names the time point
    let (csv_s, schema_s) = simulate_into(dir.path(), "sim2", 12, 7);
    let out = run(&[
        "diagnose", "--data", &csv_s, "--schema", &schema_s, "--grid", "0:1:1", "--survival",
        "--out-dir",
        dir.path().join("diag2").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("time"), "stderr: {stderr}");
}

#[test]
fn experiment_runs_and_reports_per_n() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("exp");
    let out = run(&[
        "experiment", "--system", "sim1", "--estimators", "cdrc_sequential", "--r", "2", "--n",
        "300,400", "--learners", "ols", "--folds", "5", "--times", "2", "--truth-draws", "20000",
        "--seed", "4", "--out-dir",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    for n in ["300", "400"] {
        let report = std::fs::read_to_string(out_dir.join(format!("report_n{n}.csv"))).unwrap();
        assert!(report
            .lines()
            .next()
            .unwrap()
            .starts_with("estimator,trajectory_label,time,mean_estimate,truth,bias"));
    }
    // empty estimator set is an argument error
    let out = run(&[
        "experiment", "--system", "sim1", "--estimators", "", "--r", "1", "--n", "100",
        "--out-dir",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn bootstrap_subcommand_writes_bands() {
    let dir = tempfile::tempdir().unwrap();
    let (csv, schema) = simulate_into(dir.path(), "sim1", 300, 3);
    let out_dir = dir.path().join("boot");
    let out = run(&[
        "bootstrap", "--data", &csv, "--schema", &schema, "--grid-values", "7", "--estimand",
        "cdrc_sequential", "--b", "60", "--level", "0.9", "--learners", "ols", "--times", "1",
        "--seed", "8", "--out-dir",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let bands = std::fs::read_to_string(out_dir.join("bands.csv")).unwrap();
    assert!(bands
        .lines()
        .next()
        .unwrap()
        .starts_with("trajectory_label,time,estimate,lower,upper,undefined_rate"));
}

#[test]
fn env_seed_override_applies_when_flag_absent() {
    let dir = tempfile::tempdir().unwrap();
    let csv_a = dir.path().join("a.csv");
    let csv_b = dir.path().join("b.csv");
    let csv_c = dir.path().join("c.csv");
    for (path, seed) in [(&csv_a, "77"), (&csv_b, "77"), (&csv_c, "78")] {
        let st = Command::new(bin())
            .args(["simulate", "--system", "sim1", "--n", "100"])
            .arg("--out")
            .arg(path)
            .env("DRCURVE_SEED", seed)
            .status()
            .unwrap();
        assert_eq!(st.code(), Some(0));
    }
    assert_eq!(std::fs::read(&csv_a).unwrap(), std::fs::read(&csv_b).unwrap());
    assert_ne!(std::fs::read(&csv_a).unwrap(), std::fs::read(&csv_c).unwrap());
}

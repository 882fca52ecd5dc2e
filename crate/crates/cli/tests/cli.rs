use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn ss3(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ss3"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = ss3(args);
    assert!(
        out.status.success(),
        "ss3 {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn json_file(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn metrics_of_truth_against_itself_is_zero() {
    let dir = tempfile::tempdir().unwrap();
    let g = dir.path().join("g");
    ok(&["generate", "--p1", "12", "--p2", "10", "--spectrum", "3,2", "-n", "80", "--noise", "0.1", "--out", s(&g)]);
    let out = ok(&["metrics", "--estimate", s(&g.join("truth.csv")), "--truth", s(&g.join("truth.json"))]);
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(v["fd"].as_f64().unwrap().abs() < 1e-9);
    assert_eq!(v["schema"], "ss3-report-1");
    assert_eq!(v["dim_truth"], 2 * (12 + 10 - 2));
}

#[test]
fn generate_stabilize_metrics_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let mut reports = Vec::new();
    for run in ["a", "b"] {
        let root = dir.path().join(run);
        let g = root.join("g");
        ok(&["generate", "--p1", "15", "--p2", "15", "--spectrum", "1,0.5", "-n", "150", "--snr", "3", "--seed", "5", "--out", s(&g)]);
        let rep = root.join("rep.json");
        ok(&[
            "stabilize", "--obs", s(&g.join("obs.csv")), "--dims", "15x15", "--lambda", "0.2", "--bags", "10", "--seed", "2",
            "--out", s(&rep),
        ]);
        let m = root.join("metrics.json");
        ok(&["metrics", "--estimate", s(&rep), "--truth", s(&g.join("truth.json")), "--out", s(&m)]);
        reports.push((std::fs::read(&rep).unwrap(), std::fs::read(&m).unwrap()));
    }
    assert_eq!(reports[0], reports[1]);
    let m: Value = serde_json::from_slice(&reports[0].1).unwrap();
    assert_eq!(m["space"], "tangent");
    assert!(m["fd"].as_f64().unwrap() >= 0.0);
}

#[test]
fn estimate_writes_matrix_and_pca_basis() {
    let dir = tempfile::tempdir().unwrap();
    let g = dir.path().join("g");
    ok(&[
        "generate", "--model", "denoise", "--p1", "10", "--p2", "10", "--spectrum", "5,4", "-n", "20", "--noise", "0.05",
        "--gamma", "1", "--out", s(&g),
    ]);
    let est = dir.path().join("est.csv");
    ok(&["estimate", "--obs", s(&g.join("obs")), "--estimator", "spectral", "--k", "2", "--out", s(&est)]);
    let out = ok(&["metrics", "--estimate", s(&est), "--truth", s(&g.join("truth.json"))]);
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(v["fd"].as_f64().unwrap() < 1.0);

    // PCA works on p×1 samples.
    let v1 = dir.path().join("v");
    ok(&[
        "generate", "--model", "denoise", "--p1", "10", "--p2", "1", "--spectrum", "5", "-n", "40", "--noise", "0.05",
        "--out", s(&v1),
    ]);
    let basis = dir.path().join("col.bin");
    ok(&["estimate", "--obs", s(&v1.join("obs")), "--estimator", "pca", "--k", "2", "--out", s(&basis)]);
    let out = ok(&["metrics", "--estimate", s(&basis), "--truth", s(&v1.join("truth.json"))]);
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["space"], "column");
    assert_eq!(v["dim_estimate"], 2);
}

#[test]
fn bounds_oracle_and_data_driven() {
    let dir = tempfile::tempdir().unwrap();
    let g = dir.path().join("g");
    ok(&[
        "generate", "--model", "denoise", "--p1", "12", "--p2", "12", "--spectrum", "6,5", "-n", "20", "--snr", "0.5",
        "--gamma", "2", "--out", s(&g),
    ]);
    let (obs, truth, model) = (g.join("obs"), g.join("truth.json"), g.join("model.json"));
    let common = [
        "bounds", "--obs", s(&obs), "--estimator", "spectral", "--k", "3", "--alpha", "0.8", "--bags", "10",
    ];
    let mut args = common.to_vec();
    args.extend(["--truth", s(&truth), "--data-model", s(&model), "--mc-reps", "6"]);
    let v: Value = serde_json::from_slice(&ok(&args).stdout).unwrap();
    assert_eq!(v["oracle"], true);
    let total = v["fd_bound_total"].as_f64().unwrap();
    let parts = v["F"].as_f64().unwrap() + v["kappa_bag"].as_f64().unwrap() + v["slack_term"].as_f64().unwrap();
    assert!((total - parts).abs() < 1e-9);

    let v: Value = serde_json::from_slice(&ok(&common).stdout).unwrap();
    assert_eq!(v["oracle"], false);
    assert!(v["kappa_indiv_total"].as_f64().unwrap() >= 0.0);

    // Oracle mode without a data model is a configuration error.
    let mut args = common.to_vec();
    args.extend(["--truth", s(&truth)]);
    assert_eq!(ss3(&args).status.code(), Some(2));
}

#[test]
fn experiment_from_config_with_flag_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(
        &cfg,
        r#"{"experiment": "table2", "p1": 15, "p2": 15, "spectrum": [1.0, 0.5], "observations": 150,
            "pinned_ranks": [1, 2], "lambdas": [0.3], "trials": 50}"#,
    )
    .unwrap();
    let mut summaries = Vec::new();
    for run in ["a", "b"] {
        let out = dir.path().join(run);
        ok(&["experiment", "--config", s(&cfg), "--trials", "2", "--bags", "6", "--seed", "9", "--out", s(&out)]);
        let csv = std::fs::read_to_string(out.join("results.csv")).unwrap();
        assert_eq!(csv.lines().next().unwrap(), "trial,setting,method,fd,pw,fdr,rank,mse");
        // trials × settings × methods
        assert_eq!(csv.lines().count() - 1, 2 * 2 * 2);
        summaries.push(std::fs::read(out.join("summary.json")).unwrap());
    }
    assert_eq!(summaries[0], summaries[1]);
    let v = json_file(&dir.path().join("a/summary.json"));
    assert_eq!(v["trials"], 2);
    assert_eq!(v["config"]["bags"], 6);
    assert_eq!(v["settings"].as_array().unwrap().len(), 2);
}

#[test]
fn experiment_dry_run_resolves_preset_defaults() {
    let out = ok(&["experiment", "--preset", "alpha-sweep", "--dry-run"]);
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    let alphas: Vec<f64> = v["alpha"].as_array().unwrap().iter().map(|a| a.as_f64().unwrap()).collect();
    assert_eq!(alphas.len(), 9);
    assert!((alphas[0] - 0.6).abs() < 1e-12 && (alphas[8] - 0.8).abs() < 1e-12);

    let out = ok(&["experiment", "--preset", "table1", "--trials", "3", "--alpha", "0.8", "--dry-run"]);
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["trials"], 3);
    assert_eq!(v["alpha"][0], 0.8);
    assert_eq!(v["snr"].as_array().unwrap().len(), 4);
}

#[test]
fn config_errors_exit_with_code_two() {
    assert_eq!(ss3(&["experiment", "--preset", "nope"]).status.code(), Some(2));
    assert_eq!(ss3(&["experiment", "--preset", "table1", "--trials", "0", "--dry-run"]).status.code(), Some(2));
    assert_eq!(ss3(&["experiment"]).status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(ss3(&["generate", "--out", s(dir.path())]).status.code(), Some(2));
    assert_eq!(
        ss3(&["metrics", "--estimate", "missing.csv", "--truth", "missing.json"]).status.code(),
        Some(2)
    );
}

#[test]
fn low_alpha_warns_but_runs() {
    let dir = tempfile::tempdir().unwrap();
    let g = dir.path().join("g");
    ok(&["generate", "--p1", "10", "--p2", "10", "--spectrum", "1", "-n", "70", "--noise", "0.01", "--out", s(&g)]);
    let out = ok(&[
        "stabilize", "--obs", s(&g.join("obs.csv")), "--dims", "10x10", "--lambda", "0.05", "--alpha", "0.4", "--bags", "4",
        "--out", s(&dir.path().join("r.json")),
    ]);
    assert!(String::from_utf8_lossy(&out.stderr).contains("alpha = 0.4"));
}

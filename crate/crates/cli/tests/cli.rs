use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn multivar(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_multivar")).args(args).current_dir(cwd).env("MULTIVAR_WORKERS", "1").output().unwrap()
}

fn ok(out: &Output) {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
}

fn csvs(dir: &Path) -> Vec<String> {
    let mut names: Vec<String> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .filter(|n| n.ends_with(".csv"))
        .collect();
    names.sort();
    names
}

#[test]
fn simulate_high_writes_fifteen_series() {
    let tmp = TempDir::new().unwrap();
    ok(&multivar(&["simulate", "--condition", "high", "--t", "100", "--seed", "7", "--out", "b"], tmp.path()));
    let dir = tmp.path().join("b");
    let files = csvs(&dir);
    assert_eq!(files.len(), 15);
    for f in files {
        let text = fs::read_to_string(dir.join(f)).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 101);
        assert!(lines.iter().all(|l| l.split(',').count() == 10));
    }
    assert!(dir.join("truth.json").exists());
}

#[test]
fn simulate_is_reproducible() {
    let tmp = TempDir::new().unwrap();
    for out in ["a", "b"] {
        ok(&multivar(&["simulate", "--condition", "no", "--t", "30", "--seed", "4", "--out", out], tmp.path()));
    }
    for f in csvs(&tmp.path().join("a")).iter().chain(["manifest.json".to_string(), "truth.json".into()].iter()) {
        assert_eq!(fs::read(tmp.path().join("a").join(f)).unwrap(), fs::read(tmp.path().join("b").join(f)).unwrap(), "{f}");
    }
}

#[test]
fn common_unique_layout() {
    let tmp = TempDir::new().unwrap();
    ok(&multivar(&["simulate", "--common", "0.05", "--unique", "0.05", "--k", "3", "--d", "10", "--t", "100", "--out", "c"], tmp.path()));
    let truth: serde_json::Value = serde_json::from_str(&fs::read_to_string(tmp.path().join("c/truth.json")).unwrap()).unwrap();
    let count = |v: &serde_json::Value| v.as_array().unwrap().iter().flat_map(|r| r.as_array().unwrap()).filter(|b| b.as_bool().unwrap()).count();
    assert_eq!(count(&truth["common_support"]), 5);
    for s in truth["subjects"].as_array().unwrap() {
        assert_eq!(count(&s["support"]), 10);
    }
}

#[test]
fn fit_writes_common_and_subject_matrices() {
    let tmp = TempDir::new().unwrap();
    ok(&multivar(&["simulate", "--condition", "no", "--k", "12", "--t", "100", "--seed", "2", "--out", "data"], tmp.path()));
    let fit = ["fit", "data", "--method", "adaptive-lasso", "--grid-n1", "5", "--grid-n2", "5", "--out", "fit", "--figures"];
    ok(&multivar(&fit, tmp.path()));
    let dir = tmp.path().join("fit");
    let files = csvs(&dir);
    assert!(files.contains(&"common.csv".to_string()));
    assert_eq!(files.iter().filter(|f| f.starts_with("total_")).count(), 12);
    assert!(dir.join("common.svg").exists());
    let table = fs::read_to_string(dir.join("cv_table.csv")).unwrap();
    assert_eq!(table.lines().count(), 26);
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["config"]["grid_n1"], 5);
    assert_eq!(summary["lambda2"].as_array().unwrap().len(), 12);

    // Refit at the logged penalties.
    let toml = format!("lambda1 = {}\nlambda2 = {}\n", summary["lambda1"], summary["lambda2"]);
    fs::write(tmp.path().join("refit.toml"), toml).unwrap();
    ok(&multivar(&["fit", "data", "--config", "refit.toml", "--method", "adaptive-lasso", "--out", "refit"], tmp.path()));
    for f in files.iter().filter(|f| *f != "cv_table.csv") {
        assert_eq!(fs::read(dir.join(f)).unwrap(), fs::read(tmp.path().join("refit").join(f)).unwrap(), "{f}");
    }
}

#[test]
fn thresholded_fit_has_no_common_matrix() {
    let tmp = TempDir::new().unwrap();
    ok(&multivar(&["simulate", "--condition", "low", "--t", "50", "--out", "data"], tmp.path()));
    ok(&multivar(&["fit", "data", "--method", "k1-ml-thresh", "--out", "fit"], tmp.path()));
    let files = csvs(&tmp.path().join("fit"));
    assert!(!files.contains(&"common.csv".to_string()));
    assert_eq!(files.iter().filter(|f| f.starts_with("total_")).count(), 15);
}

#[test]
fn benchmark_and_report() {
    let tmp = TempDir::new().unwrap();
    let args = [
        "benchmark", "--condition", "no", "--t", "30,40", "--method", "k1-ml-thresh,adaptive-ml", "--reps", "2",
        "--grid-n1", "3", "--grid-n2", "3", "--folds", "3",
    ];
    for out in ["r1", "r2"] {
        let mut a = args.to_vec();
        a.extend(["--out", out]);
        ok(&multivar(&a, tmp.path()));
    }
    for f in ["metrics.csv", "summary.csv", "failures.csv"] {
        assert_eq!(fs::read(tmp.path().join("r1").join(f)).unwrap(), fs::read(tmp.path().join("r2").join(f)).unwrap());
    }
    let metrics = fs::read_to_string(tmp.path().join("r1/metrics.csv")).unwrap();
    assert_eq!(metrics.lines().count(), 1 + 2 * 2 * 2);
    ok(&multivar(&["report", "r1/metrics.csv", "--out", "rep", "--figures"], tmp.path()));
    let report = fs::read_to_string(tmp.path().join("rep/report.csv")).unwrap();
    assert_eq!(report.lines().count(), 1 + 4);
    assert!(tmp.path().join("rep/report_MCC.svg").exists());
}

#[test]
fn validation_errors_exit_with_two() {
    let tmp = TempDir::new().unwrap();
    let code = |args: &[&str]| multivar(args, tmp.path()).status.code();
    assert_eq!(code(&["benchmark", "--d", "0", "--reps", "1"]), Some(2));
    fs::write(tmp.path().join("empty.toml"), "conditions = []\n").unwrap();
    assert_eq!(code(&["benchmark", "--config", "empty.toml", "--reps", "1"]), Some(2));
    assert_eq!(code(&["simulate", "--condition", "medium"]), Some(2));
    assert_eq!(code(&["fit", "missing-dir"]), Some(2));
    fs::write(tmp.path().join("bad.csv"), "a,b\n1,2\n").unwrap();
    assert_eq!(code(&["report", "bad.csv", "--out", "rep"]), Some(2));
}

#[test]
fn missing_values_are_rejected_with_location() {
    let tmp = TempDir::new().unwrap();
    ok(&multivar(&["simulate", "--condition", "no", "--t", "30", "--out", "data"], tmp.path()));
    let path = tmp.path().join("data/s03.csv");
    let text = fs::read_to_string(&path).unwrap();
    let mut lines: Vec<String> = text.lines().map(str::to_string).collect();
    let mut fields: Vec<&str> = lines[5].split(',').collect();
    fields[2] = "";
    lines[5] = fields.join(",");
    fs::write(&path, lines.join("\n") + "\n").unwrap();
    let out = multivar(&["fit", "data", "--method", "k1-ml-thresh", "--out", "fit"], tmp.path());
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("s03.csv:6") && err.contains("missing value"), "{err}");
}

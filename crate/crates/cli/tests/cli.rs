mod common;

use std::fs;

use common::{quick_config, sizereg, stderr, stdout, synthetic_data};
use sizereg::train::{aggregate_report, read_jsonl, RunResult, Summary};

fn s(p: &std::path::Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn help_and_unknown_command() {
    assert_eq!(sizereg(&["--help"]).status.code(), Some(0));
    assert_eq!(sizereg(&["frobnicate"]).status.code(), Some(1));
}

#[test]
fn prepare_reports_split_sizes() {
    let tmp = tempfile::tempdir().unwrap();
    let data = synthetic_data(tmp.path(), 60);
    let out = sizereg(&["prepare", s(&data.join("SYNTHETIC")), "SYNTHETIC"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("60 graphs"), "{text}");
    assert!(text.contains("smallest 50%"), "{text}");
}

#[test]
fn malformed_fixture_names_file() {
    let tmp = tempfile::tempdir().unwrap();
    let data = synthetic_data(tmp.path(), 20);
    let bad = data.join("SYNTHETIC").join("SYNTHETIC_A.txt");
    let mut text = fs::read_to_string(&bad).unwrap();
    text.push_str("7, banana\n");
    fs::write(&bad, text).unwrap();
    let out = sizereg(&["prepare", s(&data), "SYNTHETIC"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("SYNTHETIC_A.txt"), "{}", stderr(&out));
}

#[test]
fn missing_dataset_is_data_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = sizereg(&["prepare", s(tmp.path()), "NOPE"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn coarsen_ratio_out_of_range_is_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let data = synthetic_data(tmp.path(), 20);
    let out = sizereg(&["coarsen", "--data-dir", s(&data), "--dataset", "SYNTHETIC", "--ratios", "1.2", "--out-dir", s(&tmp.path().join("runs"))]);
    assert_eq!(out.status.code(), Some(1), "{}", stderr(&out));
}

#[test]
fn coarsen_rerun_is_up_to_date() {
    let tmp = tempfile::tempdir().unwrap();
    let data = synthetic_data(tmp.path(), 40);
    let runs = tmp.path().join("runs");
    let args = ["coarsen", "--data-dir", s(&data), "--dataset", "SYNTHETIC", "--method", "kmeans", "--agg", "sum", "--out-dir", s(&runs)];
    let first = sizereg(&args);
    assert_eq!(first.status.code(), Some(0), "{}", stderr(&first));
    assert!(stdout(&first).contains("written"));
    let second = sizereg(&args);
    assert!(stdout(&second).contains("up-to-date"), "{}", stdout(&second));
}

#[test]
fn train_no_reg_then_report() {
    let tmp = tempfile::tempdir().unwrap();
    let data = synthetic_data(tmp.path(), 60);
    let runs = tmp.path().join("runs");
    let cfg = quick_config(tmp.path(), &data, r#"{"lambda": 0.5}"#);
    for extra in [&[][..], &["--no-reg"][..]] {
        let mut args = vec!["train", "--config", s(&cfg), "--out-dir", s(&runs)];
        args.extend_from_slice(extra);
        let out = sizereg(&args);
        assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    }
    let records: Vec<RunResult> = read_jsonl(&runs.join("results.jsonl")).unwrap();
    assert_eq!(records.len(), 4);
    assert_eq!(records.iter().filter(|r| r.lambda == 0.0).count(), 2);
    assert_eq!(records.iter().filter(|r| r.lambda == 0.5).count(), 2);
    assert!(records.iter().all(|r| r.manifest_hash.is_some()));

    let out = sizereg(&["report", "--results", s(&runs.join("results.jsonl")), "--format", "csv"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let text = stdout(&out);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 2, "{text}");
    let cells: Vec<&str> = lines[1].split(',').collect();
    let without: Vec<f64> = records.iter().filter(|r| r.lambda == 0.0).map(|r| r.test_mcc).collect();
    let with: Vec<f64> = records.iter().filter(|r| r.lambda > 0.0).map(|r| r.test_mcc).collect();
    let (a, b) = (Summary::of(&without).unwrap(), Summary::of(&with).unwrap());
    assert_eq!(cells[0], "SYNTHETIC");
    assert!((cells[2].parse::<f64>().unwrap() - a.mean).abs() < 1e-12);
    assert!((cells[5].parse::<f64>().unwrap() - b.mean).abs() < 1e-12);
    assert_eq!(aggregate_report(&records).len(), 1);
}

#[test]
fn report_without_results_fails() {
    let tmp = tempfile::tempdir().unwrap();
    let out = sizereg(&["report", "--results", s(&tmp.path().join("none.jsonl"))]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn train_rejects_unknown_config_key() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.json");
    fs::write(&cfg, r#"{"lamda": 0.1}"#).unwrap();
    let out = sizereg(&["train", "--config", s(&cfg)]);
    assert_eq!(out.status.code(), Some(1), "{}", stderr(&out));
}

#[test]
fn ablate_coarsener_table() {
    let tmp = tempfile::tempdir().unwrap();
    let data = synthetic_data(tmp.path(), 40);
    let runs = tmp.path().join("runs");
    let cfg = quick_config(tmp.path(), &data, r#"{"max_epochs": 1, "seeds": [0]}"#);
    let out = sizereg(&["ablate-coarsener", "--config", s(&cfg), "--out-dir", s(&runs)]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let table = fs::read_to_string(runs.join("ablate-coarsener.csv")).unwrap();
    assert_eq!(table.lines().count(), 5, "{table}");
}

#[test]
fn analyze_cka_table() {
    let tmp = tempfile::tempdir().unwrap();
    let data = synthetic_data(tmp.path(), 40);
    let runs = tmp.path().join("runs");
    let cfg = quick_config(tmp.path(), &data, r#"{"max_epochs": 1, "seeds": [0]}"#);
    let out = sizereg(&["analyze-cka", "--config", s(&cfg), "--out-dir", s(&runs), "--ratios", "0.3,0.6"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert_eq!(stdout(&out).lines().filter(|l| l.starts_with("0.")).count(), 2);
}

use std::process::{Command, Output};

use serde_json::Value;

fn disorder(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_disorder"))
        .args(args)
        .output()
        .expect("spawn disorder")
}

fn json(out: &Output) -> Value {
    assert_eq!(out.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("json on stdout")
}

#[test]
fn solve_bayes_case3_reports_boundary() {
    let v = json(&disorder(&["solve-bayes", "--preset", "case3"]));
    assert_eq!(v["command"], "solve-bayes");
    assert_eq!(v["outputs"]["case"], "III");
    let b = v["outputs"]["B_star"].as_f64().unwrap();
    assert!((b - 0.67356163428).abs() < 1e-9, "B* = {b}");
    assert_eq!(v["outputs"]["smooth_fit"], false);
}

#[test]
fn flags_override_preset() {
    let v = json(&disorder(&["solve-bayes", "--preset", "case1", "--c", "0.1"]));
    assert_eq!(v["inputs"]["c"], 0.1);
    assert_eq!(v["outputs"]["case"], "III");
}

#[test]
fn config_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.json");
    std::fs::write(&path, r#"{"lambda0": 2, "lambda1": 1, "lambda": 0.1, "c": 1}"#).unwrap();
    let from_file = json(&disorder(&["solve-bayes", "--config", path.to_str().unwrap()]));
    let from_preset = json(&disorder(&["solve-bayes", "--preset", "case1"]));
    assert_eq!(from_file["outputs"], from_preset["outputs"]);
}

#[test]
fn unknown_config_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.json");
    std::fs::write(&path, r#"{"lambda0": 2, "lambda1": 1, "lambda": 0.1, "c": 1, "mu": 3}"#).unwrap();
    let out = disorder(&["solve-bayes", "--config", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn invalid_input_exits_one() {
    for args in [
        &["solve-bayes", "--lambda0", "2"][..],
        &["solve-bayes", "--preset", "case1", "--lambda", "-1"],
        &["solve-bayes", "--preset", "case1", "--lambda1", "2"],
        &["solve-bayes", "--preset", "case9"],
        &["simulate", "--preset", "case1"],
    ] {
        let out = disorder(args);
        assert_eq!(out.status.code(), Some(1), "{args:?}");
        assert!(!out.stderr.is_empty(), "{args:?}");
    }
}

#[test]
fn solve_variational_case4_is_one_minus_alpha() {
    let v = json(&disorder(&["solve-variational", "--preset", "case4", "--pi0", "0.1", "--alpha", "0.2"]));
    assert_eq!(v["outputs"]["B_alpha"], 0.8);
    assert_eq!(v["outputs"]["directive"], "threshold");
}

#[test]
fn grid_csv_is_written() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("v.csv");
    let v = json(&disorder(&[
        "solve-bayes",
        "--preset",
        "case2",
        "--grid",
        "11",
        "--csv",
        path.to_str().unwrap(),
    ]));
    assert!(v["diagnostics"]["csv"].is_string());
    let text = std::fs::read_to_string(&path).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("pi,value"));
    assert_eq!(lines.count(), 11);
}

#[test]
fn value_function_matches_stopping_payoff_above_boundary() {
    let out = disorder(&["value-function", "--preset", "case1", "--grid", "5"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let rows: Vec<(f64, f64)> = text
        .lines()
        .skip(1)
        .map(|l| {
            let (a, b) = l.split_once(',').unwrap();
            (a.parse().unwrap(), b.parse().unwrap())
        })
        .collect();
    assert_eq!(rows.len(), 5);
    for (pi, v) in &rows[1..] {
        assert!((v - (1.0 - pi)).abs() < 1e-12);
    }
}

#[test]
fn simulate_is_deterministic_across_thread_counts() {
    let run = |threads: &str| {
        Command::new(env!("CARGO_BIN_EXE_disorder"))
            .args(["simulate", "--preset", "case3", "--use-bstar", "--n-paths", "10000", "--pi0", "0.05"])
            .env("RAYON_NUM_THREADS", threads)
            .output()
            .unwrap()
    };
    let one = run("1");
    assert_eq!(one.status.code(), Some(0));
    assert_eq!(one.stdout, run("3").stdout);
}

#[test]
fn sweep_writes_one_row_per_threshold() {
    let out = disorder(&["simulate", "--preset", "case1", "--sweep", "0.1:0.9:5", "--n-paths", "500"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("B,risk_mean"));
    assert_eq!(text.lines().count(), 6);
}

#[test]
fn verify_single_preset_passes() {
    let out = disorder(&["verify", "--preset", "case2", "--n-paths", "4000"]);
    let table = String::from_utf8(out.stdout).unwrap();
    assert_eq!(out.status.code(), Some(0), "{table}");
    assert!(table.trim_end().ends_with("0 failed"));
}

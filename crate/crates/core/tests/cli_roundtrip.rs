use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_miso-sparse");

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn simulate(out: &Path, threads: &str) -> Output {
    run(&[
        "simulate",
        "--lambda1",
        "0.3",
        "--rho",
        "1",
        "--n",
        "48",
        "--m",
        "24",
        "--channels",
        "2",
        "--draws",
        "2",
        "--seed",
        "11",
        "--threads",
        threads,
        "--out",
        out.to_str().unwrap(),
    ])
}

#[test]
fn simulate_is_byte_identical_across_runs_and_threads() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    assert!(simulate(&a, "1").status.success());
    assert!(simulate(&b, "3").status.success());
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    assert!(dir.path().join("a.json").exists());
}

#[test]
fn sidecar_reproduces_the_csv() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("first.csv");
    assert!(simulate(&first, "2").status.success());
    let again = dir.path().join("again.csv");
    let sidecar = dir.path().join("first.json");
    let out = run(&[
        "--config",
        sidecar.to_str().unwrap(),
        "--out",
        again.to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert_eq!(fs::read(&first).unwrap(), fs::read(&again).unwrap());
}

#[test]
fn predict_leaves_empirical_columns_empty() {
    let out = run(&["predict", "--lambda1", "0.3"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let headers = reader.headers().unwrap().clone();
    let row = reader.records().next().unwrap().unwrap();
    assert_eq!(reader.records().count(), 0);
    for (name, value) in headers.iter().zip(row.iter()) {
        if name.starts_with("empirical_") || name.starts_with("se_") {
            assert!(value.is_empty(), "{name} = {value}");
        }
        if name.starts_with("predicted_") {
            assert!(value.parse::<f64>().unwrap().is_finite(), "{name}");
        }
    }
}

#[test]
fn saddle_prints_json() {
    let out = run(&["saddle", "--delta", "2", "--lambda2", "0", "--pcap", "1e6"]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let saddle = &v["points"][0]["saddle"];
    assert!(
        (saddle["tau_star"].as_f64().unwrap() - 1.0).abs() < 1e-3,
        "{v}"
    );
    assert!(
        (saddle["beta_star"].as_f64().unwrap() - 2.0).abs() < 1e-3,
        "{v}"
    );
}

#[test]
fn exit_codes_follow_the_error_kind() {
    let code = |args: &[&str]| run(args).status.code().unwrap();
    assert_eq!(code(&["predict", "--delta", "-1"]), 2);
    assert_eq!(code(&["predict", "--frobnicate"]), 2);
    assert_eq!(
        code(&["simulate", "--n", "48", "--m", "24", "--delta", "0.3"]),
        2
    );
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    fs::write(&bad, r#"{"params": {"rho": 1.0, "gamma": 2.0}}"#).unwrap();
    assert_eq!(code(&["predict", "--config", bad.to_str().unwrap()]), 2);
    assert_eq!(code(&["tune", "--kappa", "0.5", "--pb", "20"]), 3);
    assert_eq!(
        code(&[
            "saddle",
            "--lambda1",
            "0",
            "--lambda2",
            "0",
            "--delta",
            "0.5"
        ]),
        4
    );
    assert_eq!(code(&["predict", "--lambda1", "1e4"]), 4);
}

use std::process::{Command, Output};

use serde_json::Value;

fn symfpt(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_symfpt"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn json(args: &[&str]) -> Value {
    let mut full = args.to_vec();
    full.extend(["--format", "json"]);
    serde_json::from_str(&stdout(&symfpt(&full))).unwrap()
}

#[test]
fn sample_json_round_trips() {
    let v = json(&[
        "sample", "--a", "1", "--b", "1", "--n", "257", "--seed", "3",
    ]);
    let records = v["records"].as_array().unwrap();
    assert_eq!(records.len(), 257);
    for (i, r) in records.iter().enumerate() {
        assert_eq!(r["index"].as_u64().unwrap(), i as u64);
        match r["outcome"].as_str().unwrap() {
            "finite" => assert!(r["time"].as_f64().unwrap() > 0.0),
            "infinite" => assert!(r["time"].is_null()),
            other => panic!("bad outcome {other}"),
        }
    }
    assert_eq!(v["summary"]["n"].as_u64().unwrap(), 257);
}

#[test]
fn json_numbers_are_bit_faithful() {
    let text = stdout(&symfpt(&[
        "sample", "--a", "0.7", "--b", "1.3", "--n", "50", "--seed", "8",
    ]));
    let v = json(&[
        "sample", "--a", "0.7", "--b", "1.3", "--n", "50", "--seed", "8",
    ]);
    let csv_times: Vec<Option<f64>> = text
        .lines()
        .skip(1)
        .filter(|l| !l.starts_with('#'))
        .map(|l| l.split(',').nth(2).unwrap().parse().ok())
        .collect();
    let json_times: Vec<Option<f64>> = v["records"]
        .as_array()
        .unwrap()
        .iter()
        .map(|r| r["time"].as_f64())
        .collect();
    assert_eq!(csv_times, json_times);
}

#[test]
fn sample_csv_layout() {
    let text = stdout(&symfpt(&[
        "sample", "--a", "1", "--b", "1", "--n", "20", "--seed", "7",
    ]));
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "index,outcome,time");
    assert_eq!(lines.len(), 22);
    for l in &lines[1..21] {
        let f: Vec<&str> = l.split(',').collect();
        assert_eq!(f.len(), 3);
        match f[1] {
            "finite" => assert!(f[2].parse::<f64>().unwrap() > 0.0),
            "infinite" => assert!(f[2].is_empty()),
            other => panic!("bad outcome {other}"),
        }
    }
    let summary = lines[21];
    for key in ["finite_fraction=", "acceptance_rate=", "max_terms_used="] {
        assert!(summary.contains(key), "{summary}");
    }
}

#[test]
fn sample_is_deterministic() {
    let args = ["sample", "--a", "1", "--b", "1", "--n", "3", "--seed", "7"];
    assert_eq!(symfpt(&args).stdout, symfpt(&args).stdout);
    let other = ["sample", "--a", "1", "--b", "1", "--n", "3", "--seed", "8"];
    assert_ne!(symfpt(&args).stdout, symfpt(&other).stdout);
}

#[test]
fn prob_finite_value() {
    let text = stdout(&symfpt(&["prob-finite", "--a", "1", "--b", "1"]));
    let v: f64 = text.lines().nth(1).unwrap().parse().unwrap();
    assert!((v - 0.2700).abs() < 1e-4);
    let j = json(&["prob-finite", "--a", "1", "--b", "1", "--tol", "1e-9"]);
    assert!((j["prob_finite"].as_f64().unwrap() - v).abs() < 1e-9);
}

#[test]
fn cdf_rows() {
    let v = json(&["cdf", "--a", "1", "--b", "1", "--t", "0,1,1000"]);
    let rows = v["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 3);
    assert_eq!(rows[0]["cdf"].as_f64().unwrap(), 0.0);
    assert!((rows[1]["cdf"].as_f64().unwrap() - 0.1808).abs() < 5e-4);
    assert!((rows[2]["conditional_cdf"].as_f64().unwrap() - 1.0).abs() < 1e-9);
}

#[test]
fn envelope_report() {
    let v = json(&["envelope", "--a", "1", "--b", "1", "--alpha", "1"]);
    assert_eq!(v["alpha"].as_f64().unwrap(), 1.0);
    assert_eq!(v["rate"].as_f64().unwrap(), 0.5);
    assert_eq!(v["violations"].as_u64().unwrap(), 0);
    let p = v["predicted_acceptance"].as_f64().unwrap();
    assert!(p > 0.0 && p < 1.0);
}

#[test]
fn validate_reports_pass() {
    let text = stdout(&symfpt(&[
        "validate", "--a", "1", "--b", "1", "--n", "5000", "--seed", "2",
    ]));
    let v: Value = serde_json::from_str(&text).unwrap();
    for key in [
        "ks_statistic",
        "ks_threshold_99",
        "finite_fraction",
        "expected_C",
    ] {
        assert!(v[key].as_f64().is_some(), "{key}");
    }
    assert_eq!(v["pass"], Value::Bool(true));
}

#[test]
fn oracle_table() {
    let v = json(&[
        "oracle",
        "--a",
        "1",
        "--b",
        "1",
        "--dt",
        "1e-3",
        "--horizon",
        "2",
        "--n",
        "2000",
        "--seed",
        "5",
        "--t",
        "0.5,1,2",
    ]);
    let rows = v["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 3);
    let mut last = 0.0;
    for r in rows {
        let e = r["empirical_cdf"].as_f64().unwrap();
        assert!(e >= last);
        last = e;
    }
    let censored = v["censored_fraction"].as_f64().unwrap();
    assert!((censored + last - 1.0).abs() < 1e-12);
}

#[test]
fn writes_to_file() {
    let dir = std::env::temp_dir().join(format!("symfpt-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("out.csv");
    let p = path.to_str().unwrap();
    let out = symfpt(&["prob-finite", "--a", "1", "--b", "1", "--out", p]);
    assert!(out.status.success());
    assert!(out.stdout.is_empty());
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.starts_with("prob_finite\n"));
    std::fs::remove_dir_all(&dir).unwrap();
}

fn exit_and_reason(args: &[&str]) -> (i32, String) {
    let out = symfpt(args);
    let err = String::from_utf8(out.stderr).unwrap();
    (out.status.code().unwrap(), err)
}

#[test]
fn exit_codes() {
    let (code, err) =
        exit_and_reason(&["sample", "--a", "1", "--b", "0", "--n", "1", "--seed", "1"]);
    assert_eq!(code, 3);
    assert!(err.starts_with("error: unsupported_boundary:"));
    assert_eq!(err.lines().count(), 1);

    for args in [
        &["sample", "--a", "1", "--b", "1", "--n", "0", "--seed", "1"][..],
        &["sample", "--a", "1", "--b", "1", "--n", "5"],
        &["sample", "--a", "-1", "--b", "1", "--n", "5", "--seed", "1"],
        &["cdf", "--a", "1", "--b", "1", "--t", "1", "--tol", "2"],
        &["envelope", "--a", "1", "--b", "1", "--alpha", "0.2"],
        &["prob-finite", "--a", "1"],
    ] {
        let (code, err) = exit_and_reason(args);
        assert_eq!(code, 2, "{args:?}");
        assert!(
            err.starts_with("error: invalid_argument:"),
            "{args:?}: {err}"
        );
        assert_eq!(err.lines().count(), 1, "{args:?}: {err}");
    }

    let (code, _) = exit_and_reason(&["sample", "--a", "0", "--b", "1", "--n", "2", "--seed", "1"]);
    assert_eq!(code, 0);
}

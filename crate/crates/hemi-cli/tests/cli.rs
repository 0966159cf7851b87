use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn hemi(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hemi"))
        .args(args)
        .output()
        .expect("spawn hemi")
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("run.json");
    fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_string()
}

const LINEAR: &str = r#"{"field": {"dimension": 5, "kappa0": 1.0, "terms": [{"monomial": "x1", "coeff": 0.05}]}}"#;

#[test]
fn counting_a_from_indices() {
    let out = hemi(&["counting", "--A", "--indices", "4,4,3"]);
    assert_eq!(out.status.code(), Some(0));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["result"]["a1"], 1);
    assert_eq!(v["result"]["a2"], -1);
    assert_eq!(v["constants_version"], "hemi-constants/1");
    assert_eq!(v["seed"], 20240601);
}

#[test]
fn counting_b_from_indices() {
    let out = hemi(&["counting", "--B", "--indices", "5,2,3"]);
    assert_eq!(out.status.code(), Some(0));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["result"]["b1"], -1);
    assert_eq!(v["result"]["b2"], -1);
}

#[test]
fn existence_on_linear_field_is_inconclusive_for_t11() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), LINEAR);
    let out = hemi(&["--config", &cfg, "existence"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    let verdicts = v["result"]["verdicts"].as_array().unwrap();
    let t11 = verdicts.iter().find(|x| x["theorem"] == "T1_1").unwrap();
    assert_eq!(t11["conclusion"], "inconclusive");
    assert_eq!(t11["hypotheses"]["k_infinity_count"]["value"], 1.0);
    assert_eq!(v["result"]["counting"]["k_infinity"], 1);
}

#[test]
fn verify_counting_suite_passes() {
    let out = hemi(&["verify", "--suite", "counting"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["result"][0]["suite"], "counting");
    assert_eq!(v["result"][0]["passed"], true);
}

#[test]
fn repeated_runs_are_byte_identical() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), LINEAR);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        let o = out.to_str().unwrap();
        assert_eq!(hemi(&["--config", &cfg, "--out", o, "census"]).status.code(), Some(0));
        assert_eq!(
            hemi(&["--config", &cfg, "--out", o, "critical-points"]).status.code(),
            Some(0)
        );
        assert_eq!(
            hemi(&["--out", o, "--seed", "7", "verify", "--suite", "interaction"])
                .status
                .code(),
            Some(0)
        );
    }
    for name in ["census.json", "critical_points.json", "verify.json"] {
        let x = fs::read(a.join(name)).unwrap();
        let y = fs::read(b.join(name)).unwrap();
        assert_eq!(x, y, "{name} differs between runs");
    }
    let v: Value = serde_json::from_slice(&fs::read(a.join("verify.json")).unwrap()).unwrap();
    assert_eq!(v["seed"], 7);
}

#[test]
fn flow_writes_trajectory_and_certificates() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), LINEAR);
    let init = dir.path().join("init.json");
    fs::write(
        &init,
        r#"{"q": 1, "p": 0, "eps": 0.1, "bubbles": [{"alpha": 0.05,
            "point": [0.9987502603949663, 0.04997916927067833, 0.0, 0.0, 0.0, 0.0], "lambda": 100.0}]}"#,
    )
    .unwrap();
    let out_dir = dir.path().join("out");
    let out = hemi(&[
        "--config",
        &cfg,
        "--out",
        out_dir.to_str().unwrap(),
        "flow",
        "--initial",
        init.to_str().unwrap(),
        "--normalize",
        "--certificates",
        "--t-max",
        "0.5",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(out_dir.join("trajectory.csv")).unwrap();
    let mut lines = csv.lines();
    assert!(lines.next().unwrap().contains("constants_version=hemi-constants/1"));
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(header.len(), 1 + 6 + 2 + 4);
    assert_eq!(header[0], "t");
    assert_eq!(&header[9..], ["J_center", "J_halfwidth", "region", "mu_max"]);
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert!(rows.len() > 2);
    let j: Vec<f64> = rows.iter().map(|r| r[9].parse().unwrap()).collect();
    assert!(j.windows(2).all(|w| w[1] <= w[0] + 1e-12));
    let certs: Value = serde_json::from_slice(&fs::read(out_dir.join("certificates.json")).unwrap()).unwrap();
    assert_eq!(certs["result"].as_array().unwrap().len(), rows.len());
}

#[test]
fn config_errors_exit_with_two() {
    let dir = TempDir::new().unwrap();
    let bad = write_config(dir.path(), "{not json");
    assert_eq!(hemi(&["--config", &bad, "census"]).status.code(), Some(2));
    assert_eq!(hemi(&["census"]).status.code(), Some(2));
    let unknown = write_config(dir.path(), r#"{"fied": {}}"#);
    assert_eq!(hemi(&["--config", &unknown, "census"]).status.code(), Some(2));
    assert_eq!(hemi(&["verify", "--suite", "nope"]).status.code(), Some(2));
    assert_eq!(hemi(&["counting", "--indices", "1,2"]).status.code(), Some(2));
}

#[test]
fn domain_errors_exit_with_one() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"field": {"dimension": 5, "kappa0": 0.01, "terms": [{"monomial": "x1", "coeff": 1.0}]}}"#,
    );
    let out = hemi(&["--config", &cfg, "critical-points"]);
    assert_eq!(out.status.code(), Some(1), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn constants_report_is_key_value_with_errors() {
    let dir = TempDir::new().unwrap();
    let o = dir.path().to_str().unwrap();
    assert_eq!(
        hemi(&["--out", o, "constants", "--dimension", "6"]).status.code(),
        Some(0)
    );
    let text = fs::read_to_string(dir.path().join("constants.txt")).unwrap();
    assert!(text.contains("version = hemi-constants/1"));
    assert!(text.contains("seed = 20240601"));
    assert!(text.contains("n = 6"));
    let s_n = text.lines().find(|l| l.starts_with("S_n = ")).unwrap();
    assert!(s_n.contains("+-"));
}

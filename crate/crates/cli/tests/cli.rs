use std::path::PathBuf;
use std::process::{Command, Output};

use mdpjls_core::lyapunov::CertificateDoc;
use mdpjls_core::synth::SynthesisReport;
use serde_json::Value;

fn data(name: &str) -> PathBuf {
    [env!("CARGO_MANIFEST_DIR"), "..", "..", "data", name].iter().collect()
}

fn mdpjls(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mdpjls")).args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stdout_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&out.stdout)))
}

fn path(p: &std::path::Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn analyze_reports_unstable_deterministic_policy() {
    let out = mdpjls(&[
        "--json",
        "analyze",
        path(&data("counterexample.json")),
        "--policy",
        path(&data("det_s1s1.json")),
    ]);
    assert_eq!(code(&out), 0);
    let v = stdout_json(&out);
    assert!((v["ms_rho"].as_f64().unwrap() - 1.04).abs() <= 0.005);
    assert_eq!(v["ms_stable"], Value::Bool(false));
}

#[test]
fn ms_cd_result_is_verified_by_analyze() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("cd.json");
    let out = mdpjls(&[
        "synthesize",
        path(&data("counterexample.json")),
        "--method",
        "ms-cd",
        "--seed",
        "0",
        "--out",
        path(&report),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let doc: SynthesisReport = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert!(doc.ms_rho.unwrap() < 1.0);

    let out = mdpjls(&["--json", "analyze", path(&data("counterexample.json")), "--policy", path(&report)]);
    assert_eq!(code(&out), 0);
    let v = stdout_json(&out);
    assert!(v["ms_rho"].as_f64().unwrap() < 1.0);
    assert_eq!(v["ms_stable"], Value::Bool(true));
}

#[test]
fn broken_row_is_an_input_error() {
    let out = mdpjls(&["validate", path(&data("broken.json"))]);
    assert_eq!(code(&out), 3);
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("row") && err.contains("0.98"), "{err}");
    assert_eq!(code(&mdpjls(&["validate", path(&data("vehicle.json"))])), 0);
}

#[test]
fn infeasible_relaxation_exits_two() {
    let out = mdpjls(&["--json", "synthesize", path(&data("counterexample.json")), "--method", "ms-sdp"]);
    assert_eq!(code(&out), 2);
    assert_eq!(stdout_json(&out)["status"], "infeasible");
}

#[test]
fn usage_errors_exit_three() {
    assert_eq!(code(&mdpjls(&["synthesize", path(&data("vehicle.json")), "--method", "nope"])), 3);
    assert_eq!(code(&mdpjls(&["validate", "does-not-exist.json"])), 3);
    assert_eq!(code(&mdpjls(&["synthesize", path(&data("vehicle.json")), "--method", "p1-robust"])), 3);
    let out = Command::new(env!("CARGO_BIN_EXE_mdpjls"))
        .env("MDPJLS_THREADS", "zero")
        .args(["validate", path(&data("vehicle.json"))])
        .output()
        .unwrap();
    assert_eq!(code(&out), 3);
}

#[test]
fn certificate_and_probability_one_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let cert = dir.path().join("cert.json");
    let out = mdpjls(&["--json", "coefficients", path(&data("vehicle.json")), "--out", path(&cert)]);
    assert_eq!(code(&out), 0);
    let doc: CertificateDoc = serde_json::from_value(stdout_json(&out)).unwrap();
    assert_eq!(doc.alpha.len(), 3);
    let written: CertificateDoc = serde_json::from_str(&std::fs::read_to_string(&cert).unwrap()).unwrap();
    assert_eq!(written.alpha, doc.alpha);

    let report = dir.path().join("dep.json");
    let out = mdpjls(&[
        "--json",
        "synthesize",
        path(&data("vehicle.json")),
        "--method",
        "p1-dep",
        "--cert",
        path(&cert),
        "--out",
        path(&report),
    ]);
    assert_eq!(code(&out), 0);
    let printed: SynthesisReport = serde_json::from_value(stdout_json(&out)).unwrap();
    let saved: SynthesisReport = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(printed, saved);
    assert!(saved.margin > 0.0);

    let verify = |delta: &str| {
        mdpjls(&[
            "--json",
            "verify-robust",
            path(&data("vehicle.json")),
            "--policy",
            path(&report),
            "--delta",
            delta,
            "--cert",
            path(&cert),
        ])
    };
    let nominal = verify("0");
    assert_eq!(code(&nominal), 0);
    assert_eq!(stdout_json(&nominal)["satisfied"], Value::Bool(true));
    let loose = verify("0.05");
    assert_eq!(code(&loose), 2);
    assert_eq!(stdout_json(&loose)["satisfied"], Value::Bool(false));

    let traces = dir.path().join("traces");
    let out = mdpjls(&[
        "--json",
        "simulate",
        path(&data("vehicle.json")),
        "--policy",
        path(&report),
        "--steps",
        "500",
        "--runs",
        "4",
        "--seed",
        "5",
        "--cert",
        path(&cert),
        "--traces",
        path(&traces),
    ]);
    assert_eq!(code(&out), 0);
    let v = stdout_json(&out);
    assert_eq!(v["shadow_violations"], 0);
    assert_eq!(std::fs::read_dir(&traces).unwrap().count(), 4);
}

#[test]
fn study_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("spec.json");
    std::fs::write(&spec, r#"{"seed": 3, "instances": 3, "methods": ["ms-sdp", "p1-ind"]}"#).unwrap();
    let run = || {
        let out = mdpjls(&["--json", "study", path(&spec)]);
        assert_eq!(code(&out), 0);
        let v = stdout_json(&out);
        let table: Vec<Vec<bool>> = v["instances"]
            .as_array()
            .unwrap()
            .iter()
            .map(|i| ["ms-sdp", "p1-ind"].iter().map(|m| i["runs"][m]["success"].as_bool().unwrap()).collect())
            .collect();
        (table, v["successes"].clone())
    };
    assert_eq!(run(), run());
}

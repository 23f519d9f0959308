use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_conformal");

const CONSTANT: &str = r#"
mode = "lichnerowicz"
[grid]
M = 64
[seed]
tau = { mean = 1.7320508075688772 }
pi = { mean = 1.0 }
sigma_amp = 0.4082482904638630
potential = { coeffs = [1.0] }
"#;

const BENCHMARK: &str = r#"
mode = "coupled"
[grid]
M = 64
[seed]
tau = { mean = 1.0, cos = [2.0] }
psi = { cos = [0.1] }
pi = { mean = 0.01 }
sigma_amp = 0.01
potential = { coeffs = [0.1, 0.0, 0.05] }
"#;

fn run(dir: &Path, args: &[&str], config: &str) -> (Output, Option<Value>) {
    let cfg = dir.join("run.toml");
    std::fs::write(&cfg, config).unwrap();
    let out = dir.join("out");
    let mut cmd = Command::new(BIN);
    cmd.args(args).arg("--config").arg(&cfg).arg("--out").arg(&out);
    let output = cmd.output().unwrap();
    let report = std::fs::read_to_string(out.join("report.json"))
        .ok()
        .map(|s| serde_json::from_str(&s).unwrap());
    (output, report)
}

#[test]
fn solve_constant_state() {
    let tmp = tempfile::tempdir().unwrap();
    let (out, report) = run(tmp.path(), &["solve"], CONSTANT);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let r = report.unwrap();
    assert!((r["result"]["phi_const"].as_f64().unwrap() - 1.0).abs() < 1e-11);
    assert!(r["result"]["residual_sup"].as_f64().unwrap() < 1e-11);
    assert_eq!(r["status"], "pass");
    assert_eq!(r["config_hash"].as_str().unwrap().len(), 64);
}

#[test]
fn malformed_config_names_key() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = CONSTANT.replace("sigma_amp", "sigma_ampl");
    let (out, report) = run(tmp.path(), &["solve"], &bad);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("sigma_ampl"), "{stderr}");
    assert_eq!(report.unwrap()["error"]["key"], "sigma_ampl");

    let (out, _) = run(tmp.path(), &["solve"], &CONSTANT.replace("M = 64", "M = \"lots\""));
    assert_eq!(out.status.code(), Some(2));
    let (out, _) = run(tmp.path(), &["solve"], &CONSTANT.replace("lichnerowicz", "annealing"));
    assert_eq!(out.status.code(), Some(2));
    let (out, _) = run(tmp.path(), &["sweep"], CONSTANT);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("`sweep`"));
}

#[test]
fn missing_config_is_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = Command::new(BIN)
        .args(["solve", "--config"])
        .arg(tmp.path().join("nope.toml"))
        .arg("--out")
        .arg(tmp.path().join("out"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn regime_failure_exits_one() {
    let tmp = tempfile::tempdir().unwrap();
    let big = BENCHMARK.replace("sigma_amp = 0.01", "sigma_amp = 10.0");
    let (out, report) = run(tmp.path(), &["solve"], &big);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(report.unwrap()["error"]["class"], "regime");
}

#[test]
fn reports_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let (oa, _) = run(a.path(), &["solve"], BENCHMARK);
    let (ob, _) = run(b.path(), &["solve"], BENCHMARK);
    assert_eq!(oa.status.code(), Some(0));
    assert_eq!(ob.status.code(), Some(0));
    for f in ["report.json", "coupled_trace.csv"] {
        let x = std::fs::read(a.path().join("out").join(f)).unwrap();
        let y = std::fs::read(b.path().join("out").join(f)).unwrap();
        assert_eq!(x, y, "{f}");
    }
}

#[test]
fn sweep_writes_csv() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = format!("{}\n[sweep]\nparameter = \"tt_scale\"\nvalues = [1.0, 10.0]\n", BENCHMARK.replace("coupled", "sweep"));
    let (out, report) = run(tmp.path(), &["sweep"], &cfg);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(tmp.path().join("out/sweep.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("value,integral_a,energy_h,converged,r_feasible,error"));
    assert_eq!(lines.count(), 2);
    let r = report.unwrap();
    assert_eq!(r["invariants"][0]["name"], "feasibility_before_failure");
    assert_eq!(r["invariants"][0]["passed"], true);
}

#[test]
fn compare_and_certify() {
    let tmp = tempfile::tempdir().unwrap();
    let (out, report) = run(tmp.path(), &["compare"], BENCHMARK);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let d = report.unwrap()["result"]["comparison"]["disagreement"].as_f64().unwrap();
    assert!(d < 1e-6, "{d}");

    let (out, report) = run(tmp.path(), &["certify"], BENCHMARK);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let r = report.unwrap();
    let q: Vec<u64> = serde_json::from_value(r["result"]["chain"]["q"].clone()).unwrap();
    assert_eq!(q, vec![2, 4, 10, 28]);
}

#[test]
fn strict_flag_reaches_report() {
    let tmp = tempfile::tempdir().unwrap();
    let (out, report) = run(tmp.path(), &["solve", "--strict"], BENCHMARK);
    assert_eq!(out.status.code(), Some(0));
    let r = report.unwrap();
    assert_eq!(r["strict"], true);
    assert!(r["invariants"].as_array().unwrap().iter().all(|i| i["passed"] == true));
}

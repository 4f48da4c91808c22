use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fbstab"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn write(dir: &TempDir, name: &str, text: &str) -> PathBuf {
    let path = dir.path().join(name);
    std::fs::write(&path, text).unwrap();
    path
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// `1/2 x1^2 + x1 + c x2` with `x1 <= 3`, `x2 <= b`, `x1 >= 1`, `x2 >= 1`,
/// plus the zero row `0 <= 0`.
fn parametric(b: Option<f64>, c: f64) -> String {
    let (rows, rhs) = match b {
        Some(b) => (
            "[[0,0],[1,0],[0,1],[-1,0],[0,-1]]".to_string(),
            format!("[0,3,{b},-1,-1]"),
        ),
        None => ("[[0,0],[1,0],[-1,0],[0,-1]]".to_string(), "[0,3,-1,-1]".to_string()),
    };
    format!(r#"{{"dense": {{"H": [[1,0],[0,0]], "f": [1,{c}], "A": {rows}, "b": {rhs}}}}}"#)
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("JSON on stdout")
}

#[test]
fn solve_degenerate_problem() {
    let dir = TempDir::new().unwrap();
    let input = write(&dir, "deg.json", &parametric(Some(3.0), 0.0));
    let out = run(&["solve", s(&input)]);
    assert_eq!(code(&out), 0);
    let v = json(&out);
    assert_eq!(v["status"], "Optimal");
    let z = v["solution"]["z"].as_array().unwrap();
    assert!((z[0].as_f64().unwrap() - 1.0).abs() < 1e-4);
    assert!((z[1].as_f64().unwrap() - 1.0).abs() < 1e-4);
}

#[test]
fn solve_output_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let input = write(&dir, "deg.json", &parametric(Some(3.0), 0.0));
    let a = run(&["solve", s(&input)]);
    let b = run(&["solve", s(&input)]);
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn dual_infeasible_certificate_reverifies() {
    let dir = TempDir::new().unwrap();
    let input = write(&dir, "dual.json", &parametric(None, -1.0));
    let result = dir.path().join("out.json");
    let out = run(&["solve", s(&input), "--output", s(&result)]);
    assert_eq!(code(&out), 2);
    let v: Value = serde_json::from_str(&std::fs::read_to_string(&result).unwrap()).unwrap();
    assert_eq!(v["status"], "DualInfeasible");
    assert_eq!(v["certificate"]["kind"], "dual");
    let check = run(&["verify", s(&result), "--problem", s(&input)]);
    assert_eq!(code(&check), 0, "{}", String::from_utf8_lossy(&check.stdout));
}

#[test]
fn primal_infeasible_certificate_reverifies() {
    let dir = TempDir::new().unwrap();
    let input = write(&dir, "primal.json", &parametric(Some(0.0), -1.0));
    let result = dir.path().join("out.json");
    let out = run(&["solve", s(&input), "--output", s(&result)]);
    assert_eq!(code(&out), 2);
    let check = run(&["verify", s(&result), "--problem", s(&input)]);
    assert_eq!(code(&check), 0, "{}", String::from_utf8_lossy(&check.stdout));
}

#[test]
fn missing_hessian_is_an_input_error() {
    let dir = TempDir::new().unwrap();
    let input = write(&dir, "bad.json", r#"{"dense": {"f": [1]}}"#);
    let out = run(&["solve", s(&input)]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("`H`"));
}

#[test]
fn iteration_cap_exit_code() {
    let dir = TempDir::new().unwrap();
    let input = write(&dir, "deg.json", &parametric(Some(3.0), 0.0));
    let out = run(&["solve", s(&input), "--max-outer", "0"]);
    assert_eq!(code(&out), 3);
    assert_eq!(json(&out)["status"], "MaxIterations");
}

#[test]
fn verify_rejects_bad_certificates() {
    let dir = TempDir::new().unwrap();
    let problem = parametric(None, -1.0);
    let zero = write(
        &dir,
        "zero.json",
        &format!(r#"{{"problem": {problem}, "certificate": {{"kind": "dual", "dz": [0, 0]}}}}"#),
    );
    assert_eq!(code(&run(&["verify", s(&zero)])), 1);
    let flipped = write(
        &dir,
        "flip.json",
        &format!(r#"{{"problem": {problem}, "certificate": {{"kind": "dual", "dz": [0, -1]}}}}"#),
    );
    assert_eq!(code(&run(&["verify", s(&flipped)])), 1);
    let valid = write(
        &dir,
        "ok.json",
        &format!(r#"{{"problem": {problem}, "certificate": {{"kind": "dual", "dz": [0, 1]}}}}"#),
    );
    assert_eq!(code(&run(&["verify", s(&valid)])), 0);
    let malformed = write(&dir, "bad.json", &format!(r#"{{"problem": {problem}}}"#));
    assert_eq!(code(&run(&["verify", s(&malformed)])), 1);
}

#[test]
fn bench_single_point() {
    let out = run(&["bench", "servo", "--n", "10", "--budget", "1"]);
    assert_eq!(code(&out), 0);
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "model,N,backend,factor_ms,solve_ms,total_ms,outer,inner");
    assert_eq!(lines.len(), 2);
    assert!(lines[1].starts_with("servo,10,mpc,"));
}

#[test]
fn servo_demo_tracks_reference() {
    let dir = TempDir::new().unwrap();
    let csv = dir.path().join("servo.csv");
    let out = run(&["demo", "servo", "--steps", "40", "--output", s(&csv)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().count(), 41);
    assert!(text.starts_with("step,t,x1,x2,x3,x4,u1,outer_iters,inner_iters,pi_norm,status"));
    let summary = String::from_utf8_lossy(&out.stderr);
    let err: f64 = summary
        .lines()
        .find_map(|l| l.strip_prefix("final tracking error |y1 - r| = "))
        .and_then(|rest| rest.trim_end_matches(" deg").parse().ok())
        .expect("tracking error in summary");
    assert!(err <= 1.0, "{summary}");
}

#[test]
fn hcw_demo_cold_start() {
    let out = run(&["demo", "hcw", "--steps", "3", "--cold-start", "--backend", "dense"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(String::from_utf8(out.stdout).unwrap().lines().count(), 4);
}

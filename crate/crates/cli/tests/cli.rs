use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn dosecomb(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dosecomb"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout.clone()).unwrap()
}

#[test]
fn boundaries() {
    assert_eq!(stdout(&dosecomb(&["boundaries"])).trim(), "0.236491 0.358519");
    let json: Value = serde_json::from_str(&stdout(&dosecomb(&["--json", "boundaries", "--design", "keyboard"]))).unwrap();
    assert_eq!(json["schema_version"], 1);
    assert!((json["lower"].as_f64().unwrap() - 0.25).abs() < 1e-12);
    assert!((json["upper"].as_f64().unwrap() - 0.35).abs() < 1e-12);
}

#[test]
fn drp_json() {
    let out = dosecomb(&["--json", "drp", "-n", "9", "-m", "3", "-l", "6", "--isotonic-rate", "0.335"]);
    let json: Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert!((json["drp"].as_f64().unwrap() - 0.493).abs() < 1e-3);
    assert!((json["m_eff"].as_f64().unwrap() - 3.015).abs() < 1e-9);
}

#[test]
fn usage_and_validation_errors_exit_2() {
    assert_eq!(dosecomb(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(dosecomb(&["drp", "-n", "3", "-m", "4", "-l", "3"]).status.code(), Some(2));
    assert_eq!(dosecomb(&["boundaries", "--phi", "1.5"]).status.code(), Some(2));
}

#[test]
fn init_and_decide_reproduce_a_trial() {
    let dir = tempfile::tempdir().unwrap();
    let state = dir.path().join("trial.json");
    let state_arg = state.to_str().unwrap();
    stdout(&dosecomb(&["init", "--N", "30", "--seed", "2", "--out", state_arg]));
    let mut last = String::new();
    for dlt in [0, 1, 0, 0, 2, 1, 2, 2] {
        last = stdout(&dosecomb(&["decide", "--state", state_arg, "--dlt", &dlt.to_string()]));
    }
    assert!(last.contains("completed_early"), "{last}");
    assert!(last.contains("MTD d(2,2)"), "{last}");
    let after = dosecomb(&["decide", "--state", state_arg, "--dlt", "0"]);
    assert_eq!(after.status.code(), Some(1));
}

fn simulate_to(dir: &Path, name: &str, threads: &str) -> String {
    let scen = dir.join("scen");
    std::fs::create_dir_all(&scen).unwrap();
    std::fs::write(scen.join("s1.csv"), "0.05, 0.10\n0.15, 0.30\n0.30, 0.50\n").unwrap();
    let out = dir.join(name);
    stdout(&dosecomb(&[
        "simulate",
        "--scenarios",
        scen.to_str().unwrap(),
        "--N",
        "18",
        "--reps",
        "40",
        "--seed",
        "9",
        "--threads",
        threads,
        "--out",
        out.to_str().unwrap(),
    ]));
    std::fs::read_to_string(out).unwrap()
}

#[test]
fn simulate_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let a = simulate_to(dir.path(), "a.csv", "1");
    let b = simulate_to(dir.path(), "b.csv", "3");
    assert_eq!(a, b);
    // header plus 2 designs x 3 variants
    assert_eq!(a.lines().count(), 7);
    assert!(a.lines().skip(1).all(|l| l.starts_with("s1,")));
}

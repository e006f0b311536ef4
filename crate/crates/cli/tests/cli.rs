use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn powersim(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_powersim"))
        .args(args)
        .env("POWERSIM_OUT", out)
        .output()
        .expect("binary runs")
}

fn json(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).expect("stdout is json")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn fluid_reports_power_law_eigenvalues() {
    let dir = tempfile::tempdir().unwrap();
    let o = powersim(dir.path(), &["fluid", "--law", "powertcp", "--b-gbps", "100", "--tau-us", "20"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let r = json(&o);
    let ev = &r["eigenvalues"]["analytic"];
    assert!((ev[0].as_f64().unwrap() + 50_000.0).abs() < 1e-6);
    assert!((ev[1].as_f64().unwrap() + 45_000.0).abs() < 1e-6);
    assert_eq!(r["equilibrium"]["unique"], true);
    // One run directory holding the report and the trajectories.
    let runs: Vec<_> = std::fs::read_dir(dir.path()).unwrap().collect();
    assert_eq!(runs.len(), 1);
    let run = runs[0].as_ref().unwrap().path();
    for f in ["config.json", "report.json", "manifest.json", "trajectory-0.csv"] {
        assert!(run.join(f).exists(), "{f}");
    }
}

#[test]
fn fluid_gradient_law_has_no_unique_equilibrium() {
    let dir = tempfile::tempdir().unwrap();
    let o = powersim(dir.path(), &["fluid", "--law", "rtt-gradient", "--b-gbps", "100", "--tau-us", "20"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let r = json(&o);
    assert_eq!(r["equilibrium"]["unique"], false);
    assert!(r["eigenvalues"].is_null());
}

#[test]
fn fluid_without_required_flags_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = powersim(dir.path(), &["fluid", "--b-gbps", "100"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("--law"));
    assert!(stderr(&o).contains("usage:"));
}

#[test]
fn unknown_flag_and_law_are_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(powersim(dir.path(), &["sim", "--bogus"]).status.code(), Some(2));
    let o = powersim(dir.path(), &["fluid", "--law", "cubic", "--b-gbps", "1", "--tau-us", "1"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn sim_incast_prints_summary_and_writes_run() {
    let dir = tempfile::tempdir().unwrap();
    let o = powersim(dir.path(), &["sim", "--scenario", "incast", "--n", "10", "--law", "powertcp"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let s = json(&o);
    assert_eq!(s["kind"], "incast");
    assert_eq!(s["n_senders"], 10);
    assert!(s["utilization"].as_f64().unwrap() > 0.9);

    let run = std::fs::read_dir(dir.path()).unwrap().next().unwrap().unwrap().path();
    let written: Value = serde_json::from_str(&std::fs::read_to_string(run.join("summary.json")).unwrap()).unwrap();
    assert_eq!(written, s);
    assert!(run.join("metrics.ndjson").exists());
}

#[test]
fn sim_rejects_unknown_scenario_and_bad_config() {
    let dir = tempfile::tempdir().unwrap();
    let o = powersim(dir.path(), &["sim", "--scenario", "nope"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("nope"));

    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, r#"{"scenario":{"type":"incast","n_sendrs":3}}"#).unwrap();
    let o = powersim(dir.path(), &["sim", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("n_sendrs"));

    std::fs::write(&cfg, "{ not json").unwrap();
    let o = powersim(dir.path(), &["sim", "--scenario", "incast", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));

    let o = powersim(dir.path(), &["sim", "--scenario", "incast", "--gamma", "1.5"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn config_file_takes_precedence_over_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    std::fs::write(&cfg, r#"{"scenario":{"type":"incast","n_senders":3}}"#).unwrap();
    let o = powersim(dir.path(), &["sim", "--scenario", "incast", "--n", "10", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(json(&o)["n_senders"], 3);

    // A different scenario type in the file replaces the flag-built one.
    std::fs::write(&cfg, r#"{"law":"theta-powertcp","scenario":{"type":"ramp","n_flows":3}}"#).unwrap();
    let o = powersim(dir.path(), &["sim", "--scenario", "incast", "--n", "10", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(json(&o)["kind"], "ramp");
}

#[test]
fn check_exit_code_follows_outcome() {
    let dir = tempfile::tempdir().unwrap();
    let o = powersim(dir.path(), &["check", "--only", "1,2"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let table = String::from_utf8_lossy(&o.stdout);
    assert_eq!(table.lines().filter(|l| l.contains("PASS")).count(), 2);

    let o = powersim(dir.path(), &["check", "--only", "3", "--gamma", "0"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stdout).contains("FAIL"));

    assert_eq!(powersim(dir.path(), &["check", "--only", "12"]).status.code(), Some(2));
    assert_eq!(powersim(dir.path(), &["check", "--smoothing", "stale"]).status.code(), Some(2));

    let cfg = dir.path().join("check.json");
    std::fs::write(&cfg, r#"{"gamma": 0.0}"#).unwrap();
    let o = powersim(dir.path(), &["check", "--only", "3", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn sim_rdcn_reports_circuit_utilization() {
    let dir = tempfile::tempdir().unwrap();
    let o = powersim(dir.path(), &["sim", "--scenario", "rdcn", "--law", "powertcp"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let s = json(&o);
    assert_eq!(s["kind"], "rdcn");
    assert!(s["min_steady_utilization"].as_f64().unwrap() > 0.8);
}

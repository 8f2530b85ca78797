//! End-to-end checks of the binary: subcommands, exit codes, and output
//! determinism across thread counts.

mod common;

use common::scenarios_dir;
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_storage-dr"))
}

fn run_bin(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

#[test]
fn simulate_residential_succeeds() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_bin(&[
        "simulate",
        "--controller",
        "dresm",
        "--scenario",
        "residential",
        "--slots",
        "400",
        "--seed",
        "3",
        "--v",
        "5",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stdout(&out));
    assert!(dir.path().join("trace.csv").exists());
    assert!(dir.path().join("metrics.json").exists());
    assert!(dir.path().join("energy_series.csv").exists());
    assert!(dir.path().join("energy_window.csv").exists());
}

#[test]
fn esm_runs_on_load_serving_scenario() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = scenarios_dir().join("esm_load.json");
    let out = run_bin(&[
        "simulate",
        "--controller",
        "esm",
        "--scenario",
        scenario.to_str().unwrap(),
        "--slots",
        "500",
        "--seed",
        "2",
        "--v",
        "10",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stdout(&out));
}

#[test]
fn sweep_prints_one_row_per_v() {
    let out = run_bin(&[
        "sweep",
        "--v-list",
        "2,5,10,20,50",
        "--scenario",
        "residential",
        "--slots",
        "200",
        "--seed",
        "1",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stdout(&out));
    let text = stdout(&out);
    let rows = text
        .lines()
        .filter(|l| l.starts_with("dresm"))
        .count();
    assert_eq!(rows, 5, "expected 5 metric rows in:\n{text}");
}

#[test]
fn sweep_is_deterministic_across_thread_counts() {
    let args = [
        "sweep",
        "--v-list",
        "2,5,10",
        "--scenario",
        "residential",
        "--slots",
        "300",
        "--seed",
        "9",
    ];
    let serial = bin()
        .args(args)
        .env("STORAGE_DR_THREADS", "1")
        .output()
        .unwrap();
    let parallel = bin()
        .args(args)
        .env("STORAGE_DR_THREADS", "4")
        .output()
        .unwrap();
    assert_eq!(serial.status.code(), Some(0));
    assert_eq!(stdout(&serial), stdout(&parallel));
}

#[test]
fn unknown_controller_is_a_usage_error() {
    let out = run_bin(&[
        "simulate",
        "--controller",
        "mpc",
        "--scenario",
        "residential",
        "--slots",
        "10",
        "--v",
        "5",
        "--out",
        "/tmp/unused",
    ]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr).into_owned();
    assert!(err.to_lowercase().contains("usage") || err.contains("possible values"), "{err}");
}

#[test]
fn missing_scenario_is_a_config_error() {
    let out = run_bin(&[
        "simulate",
        "--controller",
        "dresm",
        "--scenario",
        "/nonexistent/scenario.json",
        "--slots",
        "10",
        "--v",
        "5",
        "--out",
        "/tmp/unused",
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn verify_accepts_clean_and_rejects_tampered_traces() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_bin(&[
        "simulate",
        "--controller",
        "dresm",
        "--scenario",
        "residential",
        "--slots",
        "300",
        "--seed",
        "4",
        "--v",
        "5",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let trace = dir.path().join("trace.csv");

    let clean = run_bin(&[
        "verify",
        "--trace",
        trace.to_str().unwrap(),
        "--scenario",
        "residential",
        "--v",
        "5",
    ]);
    assert_eq!(clean.status.code(), Some(0), "{}", stdout(&clean));

    // Corrupt one stored-energy entry.
    let text = std::fs::read_to_string(&trace).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    let mut fields: Vec<String> = lines[10].split(',').map(String::from).collect();
    fields[11] = "99999".to_string();
    lines[10] = fields.join(",");
    let tampered = dir.path().join("tampered.csv");
    std::fs::write(&tampered, lines.join("\n") + "\n").unwrap();

    let bad = run_bin(&[
        "verify",
        "--trace",
        tampered.to_str().unwrap(),
        "--scenario",
        "residential",
        "--v",
        "5",
    ]);
    assert_eq!(bad.status.code(), Some(3), "{}", stdout(&bad));
}

#[test]
fn markov_scenario_runs_from_file() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = scenarios_dir().join("markov4.json");
    let out = run_bin(&[
        "simulate",
        "--controller",
        "dresm",
        "--scenario",
        scenario.to_str().unwrap(),
        "--slots",
        "400",
        "--seed",
        "1",
        "--v",
        "5",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stdout(&out));
}

#[test]
fn lp_selftest_passes() {
    let out = run_bin(&["lp-selftest", "--n", "50", "--seed", "11", "--step", "0.05"]);
    assert_eq!(out.status.code(), Some(0), "{}", stdout(&out));
    assert!(stdout(&out).contains("all instances passed"));
}

#[test]
fn oracle_gap_reports_gain_and_cost() {
    let config = r#"{
  "mode": "iid",
  "params": {
    "eta_e": 1.0, "eta_i": 1.0, "c_grid": 4.0, "c_char": 2.0, "c_dis": 2.0,
    "l_max": 2.5, "r_max": 2.0, "p_max": 10.0, "q_max": 10.0
  },
  "disutility": { "states": [ { "name": "S", "beta": 1.0, "target": 2.0 } ] },
  "outcomes": [
    { "p": 4.0, "q": 4.0, "r": 0.0, "s": "S", "prob": 0.5 },
    { "p": 10.0, "q": 10.0, "r": 2.0, "s": "S", "prob": 0.5 }
  ]
}"#;
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("small.json");
    std::fs::write(&path, config).unwrap();
    let out = run_bin(&[
        "oracle-gap",
        "--scenario",
        path.to_str().unwrap(),
        "--delta-e",
        "0.5",
        "--v",
        "5",
        "--capacity",
        "10",
        "--slots",
        "20000",
        "--seed",
        "1",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stdout(&out));
    let text = stdout(&out);
    assert!(text.contains("RVI gain"), "{text}");
    assert!(text.contains("dresm (V=5)"), "{text}");
}

#[test]
fn bundled_scenario_files_are_valid(){
    for name in ["markov4.json", "esm_load.json", "small_gap.json"] {
        let path = scenarios_dir().join(name);
        assert!(Path::new(&path).exists(), "missing {name}");
        storage_dr_sim::load_scenario_config(&path)
            .unwrap_or_else(|e| panic!("{name}: {e}"));
    }
}

//! End-to-end checks of the binary: flag parsing, config merging, output
//! formats, and the exit-code contract.

use std::fs;
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_anosov-spectra"))
        .args(args)
        .env_remove("ANOSOV_SPECTRA_THREADS")
        .output()
        .expect("binary runs")
}

fn stdout_json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).expect("stdout is one JSON document")
}

#[test]
fn orbit_census_prints_counts() {
    let out = run(&["orbits", "--matrix", "1,1,1,2", "--pmax", "3", "--out", "json"]);
    assert!(out.status.success());
    let v = stdout_json(&out);
    assert_eq!(v["fixed_point_counts"], serde_json::json!([1, 5, 16]));
    assert_eq!(v["primitive_orbit_counts"], serde_json::json!([1, 2, 5]));
    assert_eq!(v["pass"], serde_json::json!(true));
}

#[test]
fn linear_lattice_is_the_integer_grid() {
    let out = run(&["resonances", "--linear", "--r", "1", "--J", "3"]);
    assert!(out.status.success());
    let v = stdout_json(&out);
    let entries = v["entries"].as_array().unwrap();
    assert_eq!(entries.len(), 7);
    let tau = std::f64::consts::TAU;
    for e in entries {
        let j = e["j"].as_i64().unwrap();
        let re = e["re"].as_f64().unwrap();
        let im = e["im"].as_f64().unwrap();
        assert!((-3..=3).contains(&j));
        assert!((re - tau * j as f64).abs() < 1e-12);
        assert_eq!(im, 0.0);
    }
}

#[test]
fn trace_verification_exits_zero() {
    let out = run(&[
        "verify-trace",
        "--matrix",
        "1,1,1,2",
        "--r",
        "1",
        "--linear",
        "--bumps",
        "5",
        "--tol",
        "1e-8",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v = stdout_json(&out);
    assert_eq!(v["reports"].as_array().unwrap().len(), 5);
    assert_eq!(v["pass"], serde_json::json!(true));
}

#[test]
fn config_file_fills_gaps_and_flags_win() {
    let dir = std::env::temp_dir().join("anosov-cli-config-test");
    fs::create_dir_all(&dir).unwrap();
    let cfg = dir.join("run.json");
    fs::write(&cfg, r#"{"pmax": 4, "linear": true}"#).unwrap();
    let cfg = cfg.to_str().unwrap();

    let from_cfg = stdout_json(&run(&["orbits", "--config", cfg]));
    assert_eq!(from_cfg["p_max"], serde_json::json!(4));

    let overridden = stdout_json(&run(&["orbits", "--config", cfg, "--pmax", "2"]));
    assert_eq!(overridden["p_max"], serde_json::json!(2));
}

#[test]
fn config_errors_exit_two_with_a_record() {
    let dir = std::env::temp_dir().join("anosov-cli-badcfg-test");
    fs::create_dir_all(&dir).unwrap();
    let bad = dir.join("bad.json");
    fs::write(&bad, r#"{"pmaxx": 4}"#).unwrap();

    let unknown_key = run(&["orbits", "--config", bad.to_str().unwrap()]);
    assert_eq!(unknown_key.status.code(), Some(2));
    let rec: serde_json::Value = serde_json::from_slice(&unknown_key.stderr).unwrap();
    assert_eq!(rec["kind"], serde_json::json!("config"));

    let not_hyperbolic = run(&["orbits", "--matrix", "1,0,0,1"]);
    assert_eq!(not_hyperbolic.status.code(), Some(2));

    let narrow = run(&["verify-trace", "--linear", "--bumps", "5", "--J", "100"]);
    assert_eq!(narrow.status.code(), Some(2));

    let no_csv = run(&["orbits", "--out", "csv"]);
    assert_eq!(no_csv.status.code(), Some(2));
}

#[test]
fn failed_verification_exits_one_with_the_report() {
    // A fit over t in [1, 3] is far too shallow to see the growth rate.
    let out = run(&[
        "pressure", "--linear", "--t-min", "1", "--t-max", "3", "--t-count", "3",
    ]);
    assert_eq!(out.status.code(), Some(1));
    let v = stdout_json(&out);
    assert_eq!(v["pass"], serde_json::json!(false));
}

#[test]
fn outputs_are_deterministic_across_widths() {
    let one = run(&["orbits", "--linear", "--pmax", "6", "--threads", "1"]);
    let eight = run(&["orbits", "--linear", "--pmax", "6", "--threads", "8"]);
    assert!(one.status.success() && eight.status.success());
    assert_eq!(one.stdout, eight.stdout);

    let via_env = Command::new(env!("CARGO_BIN_EXE_anosov-spectra"))
        .args(["orbits", "--linear", "--pmax", "6"])
        .env("ANOSOV_SPECTRA_THREADS", "3")
        .output()
        .unwrap();
    assert!(via_env.status.success());
    assert_eq!(via_env.stdout, one.stdout);
}

#[test]
fn csv_goes_to_files_and_stdout() {
    let dir = std::env::temp_dir().join("anosov-cli-csv-test");
    fs::create_dir_all(&dir).unwrap();
    let path = dir.join("lattice.csv");
    let out = run(&[
        "resonances", "--linear", "--J", "2", "--out", path.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let text = fs::read_to_string(&path).unwrap();
    assert!(text.starts_with("family,j,re,im\n"));
    assert_eq!(text.lines().count(), 6);

    let stdout_csv = run(&["resonances", "--linear", "--J", "2", "--out", "csv"]);
    assert_eq!(String::from_utf8_lossy(&stdout_csv.stdout), text);
}

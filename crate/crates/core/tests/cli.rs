//! End-to-end runs of the `qt` binary.

use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn qt(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qt")).args(args).output().expect("qt runs")
}

fn report(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| panic!("bad json ({e}): {}", String::from_utf8_lossy(&out.stdout)))
}

fn check<'a>(r: &'a Value, name: &str) -> &'a Value {
    r["checks"].as_array().unwrap().iter().find(|c| c["name"] == name).unwrap_or_else(|| panic!("no check {name}"))
}

/// The report without its wall-clock field.
fn stable(out: &Output) -> Value {
    let mut r = report(out);
    r.as_object_mut().unwrap().remove("seconds");
    r
}

#[test]
fn mobius_check_passes_with_defaults() {
    let out = qt(&["mobius-check"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let r = report(&out);
    assert_eq!(r["command"], "mobius-check");
    assert_eq!(r["pass"], true);
    for name in ["image[e1]", "image[-e1]", "round_trip", "equator_preserved", "gram_conformal", "liouville"] {
        assert_eq!(check(&r, name)["pass"], true, "{name}");
    }
}

#[test]
fn mobius_check_with_rotation() {
    let out = qt(&["mobius-check", "--a=-0.2,0.1,0.3,0", "--rot", "1,2,0.7;3,4,-1.1"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(report(&out)["pass"].as_bool().unwrap());
}

#[test]
fn certify_finds_the_rotation_for_a_tilted_constant() {
    let out = qt(&["certify", "--q", "3 + 0.1*x1", "--t", "0"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let r = report(&out);
    assert_eq!(check(&r, "certificate")["value"], 1.0);
    let cx1 = check(&r, "c[X1]")["value"].as_f64().unwrap();
    assert!((cx1 - 1.0).abs() < 1e-9, "{cx1}");
    assert_eq!(check(&r, "fine.interior_min")["pass"], true);
}

#[test]
fn certify_on_constant_data_is_inconclusive() {
    let out = qt(&["certify", "--q", "3", "--t", "0"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stderr).contains("inconclusive"));
    let r = report(&out);
    assert_eq!(check(&r, "certificate")["value"], 0.0);
    assert_eq!(check(&r, "inconclusive")["value"], 1.0);
}

#[test]
fn usage_errors_exit_with_two() {
    let cases: [&[&str]; 7] = [
        &["verify", "--u", "0.3*x1 +", "--nodes", "8"],
        &["verify", "--u", "x1", "--nodes", "4"],
        &["verify", "--u", "x1", "--nodes", "300"],
        &["frobnicate"],
        &["verify"],
        &["mobius-check", "--a", "0.9,0.5,0,0"],
        &["orbit-check", "--u", "x5^3", "--h", "1e-5"],
    ];
    for args in cases {
        let out = qt(args);
        assert_eq!(out.status.code(), Some(2), "{args:?}");
        assert!(out.stdout.is_empty(), "{args:?}");
    }
}

#[test]
fn parse_errors_point_at_the_column() {
    let out = qt(&["gbc", "--u", "x1 * (x2 + ", "--nodes", "8"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("--u") && err.contains('^'), "{err}");
}

#[test]
fn help_exits_cleanly() {
    let out = qt(&["--help"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    for sub in ["verify", "certify", "gbc", "mobius-check", "paneitz-check", "orbit-check"] {
        assert!(text.contains(sub), "{sub}");
    }
}

#[test]
fn a_function_violating_neumann_fails_verification() {
    let out = qt(&["verify", "--u", "x5", "--nodes", "8"]);
    assert_eq!(out.status.code(), Some(1));
    let r = report(&out);
    assert_eq!(r["pass"], false);
    assert_eq!(check(&r, "neumann")["pass"], false);
}

#[test]
fn corrupted_curvature_fails_verification() {
    // Q is manufactured from u = 0.25*x1 but with its constant shifted.
    let out = qt(&["verify", "--u", "0.25*x1", "--q", "3.1*exp(-x1)", "--t", "0", "--nodes", "12"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(report(&out)["pass"], false);
}

#[test]
fn config_file_values_yield_to_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "# tilted constant\nq = 3 + 0.1*x1\nt = 0\nnodes = 300\n").unwrap();
    let cfg = cfg.to_str().unwrap();

    let out = qt(&["certify", "--config", cfg]);
    assert_eq!(out.status.code(), Some(2), "the file alone has an invalid node count");

    let dest = dir.path().join("report.json");
    let out = qt(&["certify", "--config", cfg, "--nodes", "8", "--out", dest.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert!(out.stdout.is_empty());
    let r: Value = serde_json::from_str(&std::fs::read_to_string(&dest).unwrap()).unwrap();
    assert_eq!(r["config"]["nodes"], 8);
    assert_eq!(check(&r, "certificate")["value"], 1.0);
}

#[test]
fn bad_config_lines_are_reported_with_line_numbers() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, "u = x1\nmystery = 4\n").unwrap();
    let out = qt(&["gbc", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains(":2") || err.contains("line 2"), "{err}");
    assert!(Path::new(&cfg).exists());
}

#[test]
fn reports_do_not_depend_on_thread_count() {
    let base = ["gbc", "--u", "0.3*x1 + 0.2*x5^3", "--nodes", "16"];
    let one = qt(&[&base[..], &["--threads", "1"]].concat());
    let four = qt(&[&base[..], &["--threads", "4"]].concat());
    assert_eq!(one.status.code(), Some(0));
    let (mut a, mut b) = (stable(&one), stable(&four));
    for r in [&mut a, &mut b] {
        r["config"].as_object_mut().unwrap().remove("threads");
    }
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
}

#[test]
fn library_entry_point_matches_the_binary() {
    let code = qtkw::cli::run(["qt", "paneitz-check", "--nodes", "8", "--out", "/dev/null"]);
    assert_eq!(code, 0);
    assert_eq!(qtkw::cli::run(["qt", "paneitz-check", "--nodes", "7"]), 2);
}

//! The `ocmg` binary: exit codes, config files, output files.

use std::path::Path;
use std::process::{Command, Output};

fn ocmg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ocmg")).args(args).output().unwrap()
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn line<'a>(text: &'a str, key: &str) -> &'a str {
    text.lines().find(|l| l.starts_with(key)).unwrap_or_else(|| panic!("no {key} in {text}"))
}

#[test]
fn help_and_usage_errors() {
    assert_eq!(ocmg(&["--help"]).status.code(), Some(0));
    assert_eq!(ocmg(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(ocmg(&["mg", "--scheme", "sor"]).status.code(), Some(1));
}

#[test]
fn invalid_parameters_exit_with_one() {
    assert_eq!(ocmg(&["mg", "--N", "16", "--q", "5"]).status.code(), Some(1));
    assert_eq!(ocmg(&["mg", "--N", "18", "--q", "4"]).status.code(), Some(1));
    assert_eq!(ocmg(&["mg", "--N", "16", "--alpha", "-1"]).status.code(), Some(1));
    assert_eq!(ocmg(&["ssn", "--N", "16", "--u0", "1", "--u1", "-1"]).status.code(), Some(1));
}

#[test]
fn unconverged_solve_exits_with_two() {
    let out = ocmg(&["mg", "--N", "16", "--tol", "1e-30"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn mg_reports_and_writes_history() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("hist.csv");
    let out = ocmg(&["mg", "--scheme", "ibsr", "--N", "32", "--cycle", "V", "--out", csv.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    assert_eq!(line(&text, "converged"), "converged true");
    let rows: Vec<String> = std::fs::read_to_string(&csv).unwrap().lines().map(String::from).collect();
    assert_eq!(rows[0], "iter,residual_norm,rel_residual");
    assert!(rows.len() > 2);
}

#[test]
fn config_file_matches_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "scheme = \"cjr\"\nq = 4\nN = 64\nalpha = 1e-4\ncycle = \"W\"\nnu = 2\n").unwrap();
    let from_file = stdout(&ocmg(&["mg", "--config", cfg.to_str().unwrap()]));
    let from_flags = stdout(&ocmg(&[
        "mg", "--scheme", "cjr", "--q", "4", "--N", "64", "--alpha", "1e-4", "--cycle", "W", "--nu", "2",
    ]));
    assert_eq!(from_file, from_flags);
    // flags override the file
    let overridden = stdout(&ocmg(&["mg", "--config", cfg.to_str().unwrap(), "--nu", "1"]));
    assert_ne!(line(&overridden, "iterations"), line(&from_file, "iterations"));
}

#[test]
fn lfa_prints_closed_and_sampled() {
    let out = ocmg(&["lfa", "--scheme", "cjr", "--q", "3", "--alpha", "1e-6", "--h", "0.0625"]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    assert!(line(&text, "closed").contains("mu"));
    assert!(line(&text, "sampled").contains("mu"));
}

fn read_field(path: &Path) -> (usize, Vec<f64>) {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let n: usize = lines.next().unwrap().trim_start_matches("N ").parse().unwrap();
    let values = lines.map(|l| l.split_whitespace().nth(2).unwrap().parse().unwrap()).collect();
    (n, values)
}

#[test]
fn ssn_writes_fields_and_large_beta_gives_zero_control() {
    let dir = tempfile::tempdir().unwrap();
    let out = ocmg(&["ssn", "--scheme", "ibsr", "--N", "32", "--alpha", "1e-4", "--beta", "10", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(line(&stdout(&out), "sparsity_fraction"), "sparsity_fraction 1.000000");
    let (n, u) = read_field(&dir.path().join("u.txt"));
    assert_eq!(n, 32);
    assert_eq!(u.len(), 31 * 31);
    assert!(u.iter().all(|&v| v == 0.0));
    assert!(dir.path().join("ssn.csv").exists());
}

#[test]
fn repro_sweep_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("sweep.csv");
    let out = ocmg(&["repro", "sweep", "--out", csv.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("q,N,scheme,nu,cycle,mu_pred,rho_measured"));
    assert_eq!(lines.count(), 10);
}

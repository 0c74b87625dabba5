use std::fs;
use std::process::{Command, Output};

fn mpet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mpet")).args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

#[test]
fn run_prints_both_solvers_and_appends_report() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("runs.jsonl");
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, format!("N = 4\naudit = true\noutput = {}\n", report.display())).unwrap();
    let out = mpet(&["run", "--config", cfg.to_str().unwrap()]);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert_eq!(code(&out), 0, "{stdout}");
    assert!(stdout.contains("minres") && stdout.contains("fixed_stress"), "{stdout}");
    assert!(stdout.contains("audit:"));
    assert_eq!(fs::read_to_string(&report).unwrap().lines().count(), 1);
}

#[test]
fn bad_configuration_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    fs::write(&cfg, "N = 4\nnot_a_key = 1\n").unwrap();
    let out = mpet(&["run", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));

    fs::write(&cfg, "tau = -1\n").unwrap();
    assert_eq!(code(&mpet(&["run", "--config", cfg.to_str().unwrap()])), 2);
    assert_eq!(code(&mpet(&["run", "--config", "/nonexistent/file.cfg"])), 2);
    assert_eq!(code(&mpet(&["table", "T9", "--mesh", "2"])), 2);
    assert_eq!(code(&mpet(&["table", "T2", "--mesh", "0"])), 2);
}

#[test]
fn iteration_cap_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("capped.cfg");
    fs::write(&cfg, "N = 4\nmax_iter = 1\n").unwrap();
    let out = mpet(&["run", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stdout).contains("NOT CONVERGED"));
}

#[test]
fn table_writes_csv_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = mpet(&["table", "T2", "--mesh", "2", "--units", "paper_raw", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.path().join("T2.csv")).unwrap();
    let mut lines = csv.lines();
    assert!(lines.next().unwrap().starts_with("benchmark,h,solver,lambda_scale,beta,K1_scale"));
    assert_eq!(lines.count(), 2 * 24);
    assert!(dir.path().join("T2_timings.csv").exists());
    assert!(fs::read_to_string(dir.path().join("T2.txt")).unwrap().contains("h=1/2"));
}

#[test]
fn quick_verify_passes() {
    let out = mpet(&["verify", "--level", "quick"]);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert_eq!(code(&out), 0, "{stdout}");
    assert!(!stdout.contains("FAIL"));
}

use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_injury-lab")).args(args).output().unwrap()
}

fn fixture(name: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name).display().to_string()
}

fn scratch(name: &str) -> PathBuf {
    let dir = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("cli");
    fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn cnf_eval_normalizes() {
    let o = bin(&["cnf", "eval", "3+w^2*2+w+w^2"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o).trim(), "w^2*3");
    let o = bin(&["cnf", "eval", "w^"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn run_reproduces_the_golden_trace() {
    let out = scratch("golden.trace");
    let o = bin(&["run", "--scenario", &fixture("nonlow_alpha.scn"), "--trace", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert_eq!(fs::read_to_string(&out).unwrap(), fs::read_to_string(fixture("nonlow_alpha.trace")).unwrap());
    assert!(stdout(&o).lines().any(|l| l == "check kprime pass witness -"));
}

#[test]
fn verify_trace_exit_codes() {
    let o = bin(&["verify-trace", "--trace", &fixture("low_alpha.trace")]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("phi e=1 value=w*3"));

    // φ(1) is recorded one too high
    let bad = fs::read_to_string(fixture("low_alpha.trace")).unwrap().replace("value=w*3", "value=w*4");
    let path = scratch("bad.trace");
    fs::write(&path, bad).unwrap();
    let o = bin(&["verify-trace", "--trace", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("check phi-value fail witness 11"));

    let o = bin(&["verify-trace", "--trace", "/nonexistent/trace"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn scenario_errors_exit_with_two() {
    let path = scratch("bad.scn");
    fs::write(&path, "construction nonlow-low2\npsi 0 ghost\n").unwrap();
    let o = bin(&["run", "--scenario", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("ghost"));
}

#[test]
fn campaign_summarizes_seeds() {
    let path = scratch("small.scn");
    let text = fs::read_to_string(fixture("campaign_low2.scn")).unwrap().replace("stages 10000", "stages 400");
    fs::write(&path, text).unwrap();
    let o = bin(&["campaign", "--scenario", path.to_str().unwrap(), "--seeds", "3..6"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let out = stdout(&o);
    assert!(out.starts_with("campaign construction=nonlow-low2 runs=3 errors=0\n"));
    assert!(out.contains("check recursion pass=3 fail=0"));
    assert_eq!(out.lines().filter(|l| l.starts_with("digest seed=")).count(), 3);
    let o = bin(&["campaign", "--scenario", path.to_str().unwrap(), "--seeds", "5..5"]);
    assert_eq!(o.status.code(), Some(2));
}

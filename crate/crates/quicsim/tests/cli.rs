use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn quicsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_quicsim"))
        .args(args)
        .output()
        .unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn run_writes_traces_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out = quicsim(&[
        "run",
        "--duration",
        "2s",
        "--seed",
        "3",
        "--out",
        path(dir.path()),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    for f in [
        "cwnd-flow1.csv",
        "cwnd-flow2.csv",
        "rtt-flow1.csv",
        "rtt-flow2.csv",
        "summary.json",
    ] {
        assert!(dir.path().join(f).is_file(), "{f} missing");
    }
    let summary = fs::read_to_string(dir.path().join("summary.json")).unwrap();
    assert!(summary.contains("\"cc\": \"newreno\""), "{summary}");
    assert!(String::from_utf8_lossy(&out.stdout).contains("goodput"));
}

#[test]
fn config_file_then_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.conf");
    fs::write(&cfg, "# one flow\nflows = 1\ncc = vegas\nduration = 1s\n").unwrap();
    let out_dir = dir.path().join("out");
    let out = quicsim(&[
        "run",
        "--config",
        path(&cfg),
        "--set",
        "duration=2s",
        "--out",
        path(&out_dir),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let summary = fs::read_to_string(out_dir.join("summary.json")).unwrap();
    assert!(summary.contains("\"cc\": \"vegas\""));
    assert!(summary.contains("\"duration_s\": 2.0"), "{summary}");
    assert!(!out_dir.join("cwnd-flow2.csv").exists());
}

#[test]
fn compare_writes_one_directory_per_algorithm() {
    let dir = tempfile::tempdir().unwrap();
    let out = quicsim(&[
        "compare",
        "--duration",
        "1s",
        "--ccs",
        "newreno,quic",
        "--out",
        path(dir.path()),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(dir.path().join("newreno/summary.json").is_file());
    assert!(dir.path().join("quic/summary.json").is_file());
    assert!(!dir.path().join("vegas").exists());
}

#[test]
fn bad_configuration_exits_with_status_one() {
    for args in [
        &["run", "--cc", "bogus"][..],
        &["run", "--set", "nope"],
        &["run", "--set", "flows=many"],
        &["run", "--config", "/nonexistent/exp.conf"],
    ] {
        let out = quicsim(args);
        assert_eq!(out.status.code(), Some(1), "{args:?}");
        assert!(
            String::from_utf8_lossy(&out.stderr).starts_with("error:"),
            "{args:?}"
        );
    }
}

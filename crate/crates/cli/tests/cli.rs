use std::path::Path;
use std::process::Command;

use nfloc_cli::{dump_path, exit_code_for, EXIT_CONFIG, EXIT_FAILURES, EXIT_OK};
use nfloc_core::harness::{ResultRow, ResultTable};

fn simulate(args: &[&str], cwd: &Path) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_simulate")).args(args).current_dir(cwd).output().unwrap()
}

#[test]
fn unknown_preset_is_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = simulate(&["fig9"], dir.path());
    assert_eq!(o.status.code(), Some(EXIT_CONFIG));
    assert!(String::from_utf8_lossy(&o.stderr).contains("unknown preset"));
}

#[test]
fn bad_scenario_and_zero_trials_are_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    let sc = dir.path().join("bad.txt");
    std::fs::write(&sc, "num_antennas = lots\n").unwrap();
    let o = simulate(&["cost-curve", "--scenario", sc.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(EXIT_CONFIG));
    let o = simulate(&["cost-curve", "--trials", "0"], dir.path());
    assert_eq!(o.status.code(), Some(EXIT_CONFIG));
    std::fs::write(&sc, "ue_position = 2, -2\n").unwrap();
    let o = simulate(&["cost-curve", "--scenario", sc.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(EXIT_CONFIG));
    let o = simulate(&["cost-curve", "--seed", "minus-one"], dir.path());
    assert_eq!(o.status.code(), Some(EXIT_CONFIG));
}

#[test]
fn writes_table_and_dumps() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("fig4.csv");
    let o = simulate(
        &["fig4", "--trials", "2", "--seed", "3", "--out", out.to_str().unwrap(), "--dump-channel", "--dump-observations"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(EXIT_OK), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&out).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("preset,sweep_value,method,metric,value,trials,excluded,stderr"));
    assert!(lines.all(|l| l.starts_with("cost-curve,")));
    let ch = std::fs::read_to_string(dir.path().join("fig4.channel.csv")).unwrap();
    assert!(ch.starts_with("antenna,subcarrier,re,im\n"));
    assert_eq!(ch.lines().count(), 1 + 100 * 10);
    let obs = std::fs::read_to_string(dir.path().join("fig4.observations.csv")).unwrap();
    assert!(obs.starts_with("s,g,k,re,im\n"));
}

#[test]
fn stdout_output_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let a = simulate(&["cost-curve", "--trials", "2"], dir.path());
    let b = simulate(&["cost-curve", "--trials", "2"], dir.path());
    assert_eq!(a.status.code(), Some(EXIT_OK));
    assert!(!a.stdout.is_empty());
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn dump_paths() {
    assert_eq!(dump_path(Some(Path::new("/tmp/r.csv")), "channel"), Path::new("/tmp/r.channel.csv"));
    assert_eq!(dump_path(None, "observations"), Path::new("observations.csv"));
}

#[test]
fn failure_rate_exit_code() {
    let row = |trials, excluded| ResultRow {
        preset: "p".into(),
        sweep_value: 1.0,
        method: "m".into(),
        metric: "accuracy".into(),
        value: f64::NAN,
        trials,
        excluded,
        stderr: None,
    };
    assert_eq!(exit_code_for(&ResultTable { rows: vec![row(10, 0), row(4, 6)] }), EXIT_OK);
    assert_eq!(exit_code_for(&ResultTable { rows: vec![row(0, 10), row(4, 6)] }), EXIT_FAILURES);
}

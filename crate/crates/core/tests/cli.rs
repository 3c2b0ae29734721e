use degenlab::experiments::read_report;
use std::path::Path;
use std::process::{Command, Output};

fn degenlab(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_degenlab"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env_remove("DEGENLAB_OUT")
        .output()
        .expect("binary runs")
}

const SMALL_OBSERVE: &str = r#"{
  "mesh_levels": [1.0, 0.8],
  "observability": { "samples": 2, "inject_violation": true }
}"#;

#[test]
fn verify_weights_defaults_exit_zero() {
    let dir = tempfile::tempdir().unwrap();
    let out = degenlab(&["verify-weights"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report = read_report(&dir.path().join("verify_weights.json")).unwrap();
    assert!(report.passed());
    let plot = std::fs::read_to_string(dir.path().join("plot_verify_weights_identity_residual.csv")).unwrap();
    assert!(plot.lines().skip(1).all(|l| l.split(',').count() == 2));
}

#[test]
fn injected_violation_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let fixture = dir.path().join("violation.json");
    std::fs::write(&fixture, SMALL_OBSERVE).unwrap();
    let out = degenlab(&["observe", "--config", fixture.to_str().unwrap()], &dir.path().join("out"));
    assert_eq!(out.status.code(), Some(1), "{}", String::from_utf8_lossy(&out.stderr));
    let report = read_report(&dir.path().join("out/observe.json")).unwrap();
    let check = report.check_named("no_violation").unwrap();
    assert!(!check.passed && check.detail.contains("injected"));
}

#[test]
fn configuration_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        &["verify-weights", "--set", "alpha=2.5"][..],
        &["verify-weights", "--set", "no_such_key=1"],
        &["verify-weights", "--set", "alpha"],
        &["verify-weights", "--config", "/nonexistent/config.json"],
        &["verify-weights", "--jobs", "0"],
    ] {
        let out = degenlab(args, dir.path());
        assert_eq!(out.status.code(), Some(2), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    }
}

#[test]
fn help_lists_subcommands_and_keys() {
    let out = Command::new(env!("CARGO_BIN_EXE_degenlab")).arg("--help").output().unwrap();
    assert!(out.status.success());
    let help = String::from_utf8(out.stdout).unwrap();
    for sub in ["verify-weights", "solve", "converge", "observe", "ucp", "carleman", "all"] {
        assert!(help.contains(sub), "missing {sub}");
    }
    for (key, default) in degenlab::experiments::config_keys() {
        assert!(help.contains(&format!("{key} = {default}")), "missing {key}");
    }
}

#[test]
fn output_directory_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let status = Command::new(env!("CARGO_BIN_EXE_degenlab"))
        .args(["solve", "--set", "solve.h=0.8"])
        .env("DEGENLAB_OUT", dir.path())
        .status()
        .unwrap();
    assert!(status.success());
    for file in ["solve.json", "mesh.txt", "solution.txt", "plot_solve_l2_norm.csv"] {
        assert!(dir.path().join(file).exists(), "missing {file}");
    }
}

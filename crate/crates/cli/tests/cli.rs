use std::process::Command;

fn igadd() -> Command {
    Command::new(env!("CARGO_BIN_EXE_igadd"))
}

#[test]
fn solve_poisson1d_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out = igadd()
        .args(["solve", "poisson1d", "--degree", "3", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("PASS"), "{stdout}");
    let summary = std::fs::read_to_string(dir.path().join("summary.txt")).unwrap();
    assert!(summary.contains("degree = 3"));
    assert!(dir.path().join("history.csv").exists());
}

#[test]
fn config_file_with_flag_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("case.cfg");
    std::fs::write(&cfg, "case = poisson1d\ntrace = interp\nlattice = 16\nmax_iters = 60\n").unwrap();
    let out = igadd()
        .args(["solve", "poisson1d", "--lift", "qi", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary = std::fs::read_to_string(dir.path().join("summary.txt")).unwrap();
    assert!(summary.contains("trace = interp") && summary.contains("lift = qi"));
}

#[test]
fn usage_errors_exit_with_two() {
    for args in [
        vec!["solve", "nope"],
        vec!["solve", "poisson1d", "--trace", "cubic"],
        vec!["solve", "poisson1d", "--workers", "0"],
        vec!["frobnicate"],
    ] {
        let out = igadd().args(&args).output().unwrap();
        assert_eq!(out.status.code(), Some(2), "{args:?}");
    }
}

#[test]
fn mismatched_config_case_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("case.cfg");
    std::fs::write(&cfg, "case = circle_zoom\n").unwrap();
    let out = igadd()
        .args(["solve", "poisson1d", "--config"])
        .arg(&cfg)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

//! Process-level tests of the fbns binary: exit-code classes, determinism
//! of the emitted files, and snapshot round trips through the CLI outputs.

use std::path::Path;
use std::process::Command;

fn fbns() -> Command {
    Command::new(env!("CARGO_BIN_EXE_fbns"))
}

fn write_config(dir: &Path, body: &str) -> std::path::PathBuf {
    let path = dir.join("run.cfg");
    std::fs::write(&path, body).unwrap();
    path
}

const SMALL_RUN: &str = "grid.n1 = 8\ngrid.n2 = 8\ngrid.n3 = 17\nbasis.m = 2\ntime.T = 0.002\ntime.n_steps = 6\noutput.snapshot_stride = 3\n";

#[test]
fn run_small_case_exits_zero_and_writes_tables() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL_RUN);
    let out = dir.path().join("out");
    let status = fbns()
        .args(["run", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    let energy = std::fs::read_to_string(out.join("energy.csv")).unwrap();
    assert_eq!(energy.lines().count(), 1 + 6 + 1);
    assert!(out.join("iteration.csv").exists());
    assert!(out.join("snap_eta_000006.fsnap").exists());
}

#[test]
fn bad_grid_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "grid.n3 = 4\n");
    let status = fbns().args(["run", "--config"]).arg(&cfg).status().unwrap();
    assert_eq!(status.code(), Some(2));
}

#[test]
fn missing_config_exits_two() {
    let status = fbns()
        .args(["run", "--config", "/nonexistent/path.cfg"])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));
}

#[test]
fn hot_long_horizon_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "grid.n1 = 8\ngrid.n2 = 8\ngrid.n3 = 17\nbasis.m = 2\ntime.T = 10.0\ntime.n_steps = 20\ninitial.temperature.amplitude = 10\n",
    );
    let out = dir.path().join("out");
    let status = fbns()
        .args(["run", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(3));
}

#[test]
fn repeated_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL_RUN);
    let out1 = dir.path().join("a");
    let out2 = dir.path().join("b");
    for out in [&out1, &out2] {
        let status = fbns()
            .args(["run", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(out)
            .status()
            .unwrap();
        assert_eq!(status.code(), Some(0));
    }
    for name in ["energy.csv", "iteration.csv", "snap_v_000000.fsnap", "snap_Theta_000006.fsnap"] {
        let a = std::fs::read(out1.join(name)).unwrap();
        let b = std::fs::read(out2.join(name)).unwrap();
        assert_eq!(a, b, "{name} must be byte-identical");
    }
}

#[test]
fn contraction_study_writes_rows() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "grid.n1 = 8\ngrid.n2 = 8\ngrid.n3 = 17\nbasis.m = 2\ntime.n_steps = 8\n",
    );
    let out = dir.path().join("out");
    let status = fbns()
        .args(["contraction-study", "--config"])
        .arg(&cfg)
        .args(["--horizons", "0.02,0.01", "--seed", "7", "--out"])
        .arg(&out)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    let csv = std::fs::read_to_string(out.join("contraction.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);

    // Empty horizon list is a configuration error.
    let status = fbns()
        .args(["contraction-study", "--config"])
        .arg(&cfg)
        .args(["--horizons", "", "--out"])
        .arg(&out)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));
}

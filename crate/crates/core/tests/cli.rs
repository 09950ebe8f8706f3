//! CLI surface: exit codes, config echo round-trips and byte-identical
//! reruns through the actual binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_wavelab")
}

fn tmp(name: &str) -> PathBuf {
    let dir = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join(name);
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn run(args: &[&str]) -> Output {
    Command::new(bin()).args(args).output().expect("binary runs")
}

#[test]
fn geometry_prints_the_square_diagonal() {
    let dir = tmp("cli_geometry");
    let out = run(&[
        "geometry",
        "--shape",
        "square",
        "--x0",
        "0.5,0.5",
        "--out-dir",
        dir.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("\"2R\":1.4142135623730951e0"), "{text}");
}

#[test]
fn config_errors_exit_2_with_json() {
    let dir = tmp("cli_badconfig");
    let out = run(&[
        "geometry",
        "--shape",
        "heptagon",
        "--out-dir",
        dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("\"kind\":\"config\""), "{err}");

    let out = run(&["--config", "/nonexistent/config.txt"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn numerical_failures_exit_3() {
    // Unfiltered HUM on a refined grid: the known divergence, surfacing as
    // a CG failure.
    let dir = tmp("cli_nofilter");
    let out = run(&[
        "hum",
        "--n-cells",
        "60",
        "--horizon",
        "2.2",
        "--no-filter",
        "--cg-max-iter",
        "25",
        "--out-dir",
        dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(3), "{:?}", out);
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("\"kind\":\"numerical\""), "{err}");
}

fn read_sorted(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut entries: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().into_string().unwrap(), std::fs::read(e.path()).unwrap())
        })
        .collect();
    entries.sort();
    entries
}

#[test]
fn identical_config_and_seed_reproduce_bytes() {
    let dir_a = tmp("cli_det_a");
    let dir_b = tmp("cli_det_b");
    for dir in [&dir_a, &dir_b] {
        let out = run(&[
            "observe",
            "--n-cells",
            "80",
            "--horizon",
            "2.5",
            "--ensemble",
            "random:10",
            "--seed",
            "7",
            "--out-dir",
            dir.to_str().unwrap(),
        ]);
        assert!(out.status.success(), "{out:?}");
    }
    assert_eq!(read_sorted(&dir_a), read_sorted(&dir_b));
}

#[test]
fn config_echo_reingests_to_the_same_run() {
    let dir_a = tmp("cli_echo_a");
    let out = run(&[
        "hum",
        "--n-cells",
        "80",
        "--horizon",
        "2.4",
        "--filter-fraction",
        "0.4",
        "--out-dir",
        dir_a.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{out:?}");
    let echo = dir_a.join("config_echo.txt");
    assert!(echo.exists());

    let dir_b = tmp("cli_echo_b");
    let out = run(&[
        "--config",
        echo.to_str().unwrap(),
        "--out-dir",
        dir_b.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{out:?}");
    let diag_a = std::fs::read(dir_a.join("diagnostics.json")).unwrap();
    let diag_b = std::fs::read(dir_b.join("diagnostics.json")).unwrap();
    assert_eq!(diag_a, diag_b);
}

#[test]
fn reproduce_lists_and_runs_scenarios() {
    let dir = tmp("cli_reproduce");
    let out = run(&["reproduce", "list", "--out-dir", dir.to_str().unwrap()]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("hum_mode1"));

    let out = run(&["reproduce", "no_such_thing", "--out-dir", dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

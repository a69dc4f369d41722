//! End-to-end tests of the command-line interface: file contracts, exit
//! codes, determinism, and the check subcommand's filter semantics.

use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_tbmm-bench");

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("spawn")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

const SMALL_MATREC: &str = "
experiment = matrec
name = matrec
rows = 20
cols = 10
rank = 2
measurements = 60
trials = 2
base_seed = 17
timing = none

[solver tbmm]
max_iters = 20

[solver niht]
max_iters = 20
";

fn write_config(dir: &Path, text: &str) -> std::path::PathBuf {
    let path = dir.join("exp.cfg");
    std::fs::write(&path, text).expect("write config");
    path
}

#[test]
fn version_exits_zero() {
    let out = run(&["version"]);
    assert_eq!(code(&out), 0);
    assert!(stdout(&out).contains("tbmm-bench"));
}

#[test]
fn run_emits_the_documented_file_set() {
    let tmp = tempfile::tempdir().expect("tmpdir");
    let cfg = write_config(tmp.path(), SMALL_MATREC);
    let out_dir = tmp.path().join("out");
    let out = run(&["run", cfg.to_str().unwrap(), "--out", out_dir.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    for name in [
        "matrec_tbmm_trial0.csv",
        "matrec_tbmm_trial1.csv",
        "matrec_niht_trial0.csv",
        "matrec_niht_trial1.csv",
        "matrec_aggregate.csv",
        "matrec_status.csv",
        "matrec_meta.txt",
        "matrec_plot.py",
    ] {
        assert!(out_dir.join(name).is_file(), "missing {name}");
    }
    let trace = std::fs::read_to_string(out_dir.join("matrec_tbmm_trial0.csv")).expect("read");
    assert!(trace.starts_with("solver,trial,iter,elapsed_s,objective,rel_error,stationarity,delta_n\n"));
    assert!(!trace.contains('\r'));
    let agg = std::fs::read_to_string(out_dir.join("matrec_aggregate.csv")).expect("read");
    assert!(agg.starts_with("solver,iter,mean_rel_error,std_rel_error,mean_objective,mean_stationarity\n"));
}

#[test]
fn identical_runs_are_byte_identical() {
    let tmp = tempfile::tempdir().expect("tmpdir");
    let cfg = write_config(tmp.path(), SMALL_MATREC);
    let dir_a = tmp.path().join("a");
    let dir_b = tmp.path().join("b");
    for dir in [&dir_a, &dir_b] {
        let out = run(&[
            "run",
            cfg.to_str().unwrap(),
            "--out",
            dir.to_str().unwrap(),
            "--trials",
            "1",
        ]);
        assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    }
    for name in ["matrec_tbmm_trial0.csv", "matrec_niht_trial0.csv", "matrec_aggregate.csv"] {
        let a = std::fs::read(dir_a.join(name)).expect("read");
        let b = std::fs::read(dir_b.join(name)).expect("read");
        assert_eq!(a, b, "{name} differs between identical runs");
    }
}

#[test]
fn seed_override_changes_the_data() {
    let tmp = tempfile::tempdir().expect("tmpdir");
    let cfg = write_config(tmp.path(), SMALL_MATREC);
    let dir_a = tmp.path().join("a");
    let dir_b = tmp.path().join("b");
    for (dir, seed) in [(&dir_a, "1"), (&dir_b, "2")] {
        let out = run(&[
            "run",
            cfg.to_str().unwrap(),
            "--out",
            dir.to_str().unwrap(),
            "--seed",
            seed,
        ]);
        assert_eq!(code(&out), 0);
    }
    let a = std::fs::read(dir_a.join("matrec_tbmm_trial0.csv")).expect("read");
    let b = std::fs::read(dir_b.join("matrec_tbmm_trial0.csv")).expect("read");
    assert_ne!(a, b, "different seeds must change the traces");
}

#[test]
fn config_errors_exit_two() {
    let tmp = tempfile::tempdir().expect("tmpdir");
    let bad = write_config(tmp.path(), "experiment = matrec\nrowz = 5\n[solver tbmm]\n");
    let out = run(&["run", bad.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("rowz"));

    let missing = tmp.path().join("nope.cfg");
    let out = run(&["run", missing.to_str().unwrap()]);
    assert_eq!(code(&out), 2);

    let niht_misuse = write_config(tmp.path(), "experiment = ncpd\n[solver niht]\n");
    let out = run(&["run", niht_misuse.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("does not apply"));
}

#[test]
fn unwritable_output_exits_three_with_the_path() {
    let tmp = tempfile::tempdir().expect("tmpdir");
    let cfg = write_config(tmp.path(), SMALL_MATREC);
    let blocker = tmp.path().join("blocker");
    std::fs::write(&blocker, "regular file").expect("write");
    let target = blocker.join("out");
    let out = run(&["run", cfg.to_str().unwrap(), "--out", target.to_str().unwrap()]);
    assert_eq!(code(&out), 3);
    assert!(stderr(&out).contains("blocker"), "stderr: {}", stderr(&out));
}

#[test]
fn check_passes_on_this_build() {
    let out = run(&["check"]);
    assert_eq!(code(&out), 0, "stdout: {}\nstderr: {}", stdout(&out), stderr(&out));
    let text = stdout(&out);
    let lines: Vec<&str> = text.lines().collect();
    assert!(lines.len() >= 10, "expected a full suite, got {}", lines.len());
    assert!(lines.iter().all(|l| l.starts_with("PASS")));
}

#[test]
fn the_broken_gradient_fixture_exits_one() {
    let out = run(&["check", "--broken-fixture"]);
    assert_eq!(code(&out), 1);
    let text = stdout(&out);
    assert!(text.contains("FAIL fd_broken_fixture"), "{text}");
}

#[test]
fn filter_selects_matching_checks_only() {
    let out = run(&["check", "--filter", "rate"]);
    assert_eq!(code(&out), 0);
    let text = stdout(&out);
    assert!(!text.is_empty());
    for line in text.lines() {
        assert!(line.contains("rate"), "unexpected line {line:?}");
    }

    let out = run(&["check", "--filter", "zzz_nothing"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn parallel_flag_reproduces_serial_output() {
    let tmp = tempfile::tempdir().expect("tmpdir");
    let cfg = write_config(tmp.path(), SMALL_MATREC);
    let dir_a = tmp.path().join("serial");
    let dir_b = tmp.path().join("parallel");
    let out = run(&["run", cfg.to_str().unwrap(), "--out", dir_a.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    let out = run(&[
        "run",
        cfg.to_str().unwrap(),
        "--out",
        dir_b.to_str().unwrap(),
        "--parallel",
        "2",
    ]);
    assert_eq!(code(&out), 0);
    let a = std::fs::read(dir_a.join("matrec_aggregate.csv")).expect("read");
    let b = std::fs::read(dir_b.join("matrec_aggregate.csv")).expect("read");
    assert_eq!(a, b);
}

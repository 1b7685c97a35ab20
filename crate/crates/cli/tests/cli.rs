use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = r#"
estimator = "os_gptd"
num_features = 8
num_trajectories = 1
horizon = 5
master_seed = 11
kernels = [{ family = "gaussian", lengthscale = 0.1 }]

[environment]
kind = "random_walk"
num_states = 10
state_dim = 3
"#;

fn ostd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ostd"))
        .args(args)
        .output()
        .expect("spawn ostd")
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

fn run_into(config: &str, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["run", config, "--out-dir", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    let o = ostd(&args);
    assert!(
        o.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&o.stderr)
    );
    o
}

#[test]
fn smoke_run_writes_one_row_per_slot() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "small.toml", SMALL);
    let out = dir.path().join("out");
    let o = run_into(&cfg, &out, &[]);
    assert!(String::from_utf8_lossy(&o.stdout).contains("final pred err"));

    let curves = fs::read_to_string(out.join("curves.csv")).unwrap();
    let lines: Vec<&str> = curves.lines().collect();
    assert_eq!(lines[0], "# schema=1");
    assert_eq!(lines.len(), 2 + 5);
    assert!(out.join("stability.csv").exists());
    assert!(!out.join("weights.csv").exists());
}

#[test]
fn fixed_seed_gives_identical_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "small.toml", SMALL);
    let (a, b, c) = (
        dir.path().join("a"),
        dir.path().join("b"),
        dir.path().join("c"),
    );
    run_into(&cfg, &a, &[]);
    run_into(&cfg, &b, &["--workers", "2"]);
    run_into(&cfg, &c, &["--seed", "12"]);
    let read = |d: &Path| fs::read(d.join("curves.csv")).unwrap();
    assert_eq!(read(&a), read(&b));
    assert_ne!(read(&a), read(&c));
}

#[test]
fn single_kernel_ensemble_matches_single_estimator() {
    let dir = tempfile::tempdir().unwrap();
    let multi = SMALL
        .replace("num_trajectories = 1", "num_trajectories = 3")
        .replace("horizon = 5", "horizon = 40");
    let single = write_config(dir.path(), "single.toml", &multi);
    let ensemble = write_config(
        dir.path(),
        "ensemble.toml",
        &multi.replace(r#"estimator = "os_gptd""#, r#"estimator = "os_egptd""#),
    );
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    run_into(&single, &a, &[]);
    run_into(&ensemble, &b, &[]);
    assert_eq!(
        fs::read(a.join("curves.csv")).unwrap(),
        fs::read(b.join("curves.csv")).unwrap()
    );
    let weights = fs::read_to_string(b.join("weights.csv")).unwrap();
    assert!(weights.lines().skip(2).all(|l| l.ends_with(",1")));
}

#[test]
fn regret_and_bench_write_their_tables() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "small.toml",
        &format!(
            "{SMALL}\n[bench]\nmethods = [\"os_gptd\", \"batch_oracle\"]\nhorizon = 20\noracle_horizon = 10\nnum_trajectories = 2\nwindow = 5\n"
        ),
    );
    let out = dir.path().join("out");
    let o = ostd(&[
        "regret",
        &cfg,
        "--horizons",
        "5,10,20",
        "--out-dir",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let regret = fs::read_to_string(out.join("regret.csv")).unwrap();
    assert_eq!(regret.lines().count(), 2 + 3);

    let o = ostd(&["bench", &cfg, "--out-dir", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let timing = fs::read_to_string(out.join("timing.csv")).unwrap();
    assert_eq!(
        timing.lines().nth(1).unwrap(),
        "method,window_start,window_end,median_seconds_per_slot"
    );
    assert_eq!(timing.lines().count(), 2 + 4 + 2);
}

#[test]
fn config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.toml");
    assert_eq!(
        ostd(&["run", missing.to_str().unwrap()]).status.code(),
        Some(2)
    );

    let typo = write_config(dir.path(), "typo.toml", &SMALL.replace("horizon", "horizn"));
    let o = ostd(&["run", &typo]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("horizn"));

    let empty = write_config(
        dir.path(),
        "empty.toml",
        &SMALL.replace(
            r#"kernels = [{ family = "gaussian", lengthscale = 0.1 }]"#,
            "kernels = []",
        ),
    );
    assert_eq!(ostd(&["run", &empty]).status.code(), Some(2));

    let cfg = write_config(dir.path(), "small.toml", SMALL);
    let o = ostd(&["regret", &cfg, "--horizons", "10,5"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn numeric_failures_exit_with_three() {
    let dir = tempfile::tempdir().unwrap();
    // Lengthscale so small that every feature overflows to a non-finite value.
    let cfg = write_config(
        dir.path(),
        "bad.toml",
        &SMALL.replace("lengthscale = 0.1", "lengthscale = 1e-308"),
    );
    let o = ostd(&[
        "run",
        &cfg,
        "--out-dir",
        dir.path().join("out").to_str().unwrap(),
    ]);
    assert_eq!(
        o.status.code(),
        Some(3),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    assert!(String::from_utf8_lossy(&o.stderr).contains("trajectory 0"));
}

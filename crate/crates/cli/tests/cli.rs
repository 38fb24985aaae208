use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn oamris(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_oamris"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn small_config(dir: &Path) -> String {
    let path = dir.join("small.toml");
    fs::write(
        &path,
        "scene.q_y = 3\nscene.q_z = 3\nsweep.schemes = [\"proposed\", \"no-ris\"]\n\
         convergence.q = [10, 20]\nmc.trials = 500\nmc.snr_grid_db = [0.0, 10.0]\n",
    )
    .unwrap();
    path.to_str().unwrap().to_string()
}

fn data_rows(csv: &str) -> Vec<&str> {
    csv.lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .collect()
}

#[test]
fn selftest_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let out = oamris(&["selftest", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stdout)
    );
    assert!(!String::from_utf8_lossy(&out.stdout).contains("FAIL"));
    assert!(dir.path().join("selftest.csv").exists());
}

#[test]
fn sweep_zr_writes_seven_rows_per_scheme() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = oamris(&[
        "sweep-zr",
        "--config",
        &cfg,
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    for scheme in ["proposed", "no_ris"] {
        let csv = fs::read_to_string(dir.path().join(format!("sweep_zr_{scheme}.csv"))).unwrap();
        assert!(csv.starts_with("# config-sha256="));
        assert_eq!(data_rows(&csv).len(), 7);
    }
}

#[test]
fn convergence_starts_at_zero_and_counts_up() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = oamris(&[
        "convergence",
        "--config",
        &cfg,
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let csv = fs::read_to_string(dir.path().join("convergence.csv")).unwrap();
    let idx: Vec<usize> = data_rows(&csv)
        .iter()
        .map(|l| l.split(',').next().unwrap().parse().unwrap())
        .collect();
    assert!(!idx.is_empty());
    assert!(idx.iter().enumerate().all(|(i, &v)| i == v));
}

#[test]
fn invalid_config_exits_one_naming_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    fs::write(&path, "power.rho = 2.0\n").unwrap();
    let out = oamris(&[
        "sweep-zr",
        "--config",
        path.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("power.rho"));
}

#[test]
fn missing_config_file_is_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = oamris(&[
        "ber",
        "--config",
        dir.path().join("none.toml").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn unknown_experiment_is_rejected() {
    let out = oamris(&["fig7"]);
    assert!(!out.status.success());
}

#[test]
fn repeated_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for (out, threads) in [(&a, "4"), (&b, "1")] {
        let o = oamris(&[
            "ber",
            "--config",
            &cfg,
            "--seed",
            "5",
            "--threads",
            threads,
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(o.status.code(), Some(0));
    }
    let x = fs::read(a.join("ber.csv")).unwrap();
    let y = fs::read(b.join("ber.csv")).unwrap();
    assert_eq!(x, y);
    assert!(String::from_utf8_lossy(&x).contains("seed=5"));
}

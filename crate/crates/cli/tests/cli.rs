//! Runs the `msmfe` binary end to end.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn msmfe(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_msmfe"))
        .args(args)
        .env("MSMFE_THREADS", "1")
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, text: &str) -> String {
    let p = dir.join("run.cfg");
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn malformed_configs_exit_with_code_2() {
    let dir = tempfile::tempdir().unwrap();
    for text in [
        "T = 1\n",
        "experiment = unknown\n",
        "experiment = footing\ndt = 0\n",
        "experiment = footing\nfoo = bar\n",
        "experiment = cantilever\nlevels = x\n",
    ] {
        let cfg = write_config(dir.path(), text);
        let out = msmfe(&["run", &cfg, "--out", dir.path().to_str().unwrap()]);
        assert_eq!(
            out.status.code(),
            Some(2),
            "{text:?}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
    let missing = dir.path().join("absent.cfg");
    assert_eq!(msmfe(&["run", missing.to_str().unwrap()]).status.code(), Some(2));
    let cfg = write_config(dir.path(), "experiment = footing\n");
    assert_eq!(
        msmfe(&["converge", &cfg]).status.code(),
        Some(2),
        "footing has no exact solution"
    );
    assert_eq!(msmfe(&["run", &cfg, "--path", "sideways"]).status.code(), Some(2));
}

#[test]
fn single_level_study_reports_errors_without_rates() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "experiment = example2\nnx = 4\nlevels = 1\n");
    let out = msmfe(&["converge", &cfg, "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.path().join("errors.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows[0], "h,field,norm,error,rate");
    assert_eq!(rows.len(), 1 + 14);
    assert!(rows[1..].iter().all(|r| r.ends_with(',')), "{csv}");
    assert!(String::from_utf8_lossy(&out.stdout).contains("no rates"));
}

#[test]
fn two_level_study_with_both_paths_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "experiment = simplicial_mms\nnx = 4\nlevels = 2\nT = 2e-4\n",
    );
    let mut csvs = Vec::new();
    for sub in ["a", "b"] {
        let out_dir = dir.path().join(sub);
        let out = msmfe(&[
            "converge",
            &cfg,
            "--out",
            out_dir.to_str().unwrap(),
            "--path",
            "both",
            "--tol",
            "1e-12",
        ]);
        assert!(
            matches!(out.status.code(), Some(0) | Some(1)),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
        csvs.push(fs::read(out_dir.join("errors.csv")).unwrap());
    }
    assert_eq!(csvs[0], csvs[1]);
    let text = String::from_utf8(csvs.remove(0)).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("h,field,norm,error,rate,discrepancy"));
    for line in lines {
        let d: f64 = line.rsplit(',').next().unwrap().parse().unwrap();
        assert!(d <= 1e-8, "{line}");
    }
}

#[test]
fn zero_source_custom_run_writes_zero_fields() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "experiment = custom\ncell = tri\nnx = 3\nT = 0.3\ndt = 0.1\nmaterial = example3\n",
    );
    let out = msmfe(&["run", &cfg, "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    for step in 1..=3 {
        let vtk = fs::read_to_string(dir.path().join(format!("custom_{step:04}.vtk"))).unwrap();
        let data = vtk.split("CELL_DATA").nth(1).unwrap();
        let values = data
            .lines()
            .skip(1)
            .filter(|l| !l.starts_with(|c: char| c.is_ascii_uppercase()))
            .flat_map(str::split_whitespace);
        let mut n = 0;
        for tok in values {
            assert_eq!(tok.parse::<f64>().unwrap(), 0.0, "nonzero value {tok}");
            n += 1;
        }
        // p, gamma, u (3), z (3), sigma (9) per cell
        assert_eq!(n, 18 * 17);
    }
    let diag = fs::read_to_string(dir.path().join("diagnostics.csv")).unwrap();
    assert_eq!(diag.lines().count(), 4);
}

#[test]
fn cantilever_run_has_no_checkerboard_at_the_first_step() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "experiment = cantilever\nnx = 8\nT = 2e-3\nsnapshot_every = 2\n",
    );
    let out = msmfe(&["run", &cfg, "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let diag = fs::read_to_string(dir.path().join("diagnostics.csv")).unwrap();
    let first: Vec<&str> = diag.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(first[0], "1");
    assert_eq!(first[5], "0", "alternating checkerboard cells");
    assert!(!dir.path().join("cantilever_0001.vtk").exists());
    assert!(dir.path().join("cantilever_0002.vtk").exists());
}

#[test]
fn footing_run_writes_one_snapshot_per_step() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "experiment = footing\nnx = 6\nny = 3\n");
    let out = msmfe(&["run", &cfg, "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let snapshots = fs::read_dir(dir.path())
        .unwrap()
        .filter(|e| e.as_ref().unwrap().path().extension().is_some_and(|x| x == "vtk"))
        .count();
    assert_eq!(snapshots, 50);
    let diag = fs::read_to_string(dir.path().join("diagnostics.csv")).unwrap();
    assert_eq!(diag.lines().count(), 51);
}

//! End-to-end tests of the `varsolve` binary: exit codes, run-directory
//! layout, metric schema, reproducibility, eval and sweep plumbing.

use std::path::Path;
use std::process::{Command, Output};

fn varsolve(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_varsolve"))
        .args(args)
        .current_dir(dir)
        .env("VARSOLVE_OUT", dir.join("out"))
        .output()
        .expect("binary runs")
}

const TINY: &str = "\
problem = poisson2d
method = aldl
beta0 = 1e2
epochs = 2
epochs_primal = 4
epochs_multiplier = 4
batch_interior = 16
boundary_points_per_face = 4
primal_width = 6
primal_depth = 2
multiplier_width = 5
multiplier_depth = 2
grid_h = 1/4
seed = 7
";

fn write_cfg(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn zero_epoch_run_writes_all_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_cfg(tmp.path(), "t.cfg", &TINY.replace("epochs = 2", "epochs = 0"));
    let out = varsolve(&["run", cfg.to_str().unwrap()], tmp.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let run_dir = tmp.path().join("out/t");
    let metrics = std::fs::read_to_string(run_dir.join("metrics.csv")).unwrap();
    let lines: Vec<&str> = metrics.lines().collect();
    assert_eq!(
        lines[0],
        "epoch,loss,beta,lr,err_abs_in,err_rel_in,err_abs_bd,err_rel_bd,rho_rel_err,wall_s"
    );
    assert_eq!(lines.len(), 2, "one evaluation row");
    // loss is unknown before the first step: empty field, never zero
    assert!(lines[1].starts_with("0,,"));
    assert!(run_dir.join("primal.ckpt").exists());
    assert!(run_dir.join("multiplier.ckpt").exists());
    let manifest = std::fs::read_to_string(run_dir.join("manifest")).unwrap();
    assert!(manifest.contains("status = ok"));
    assert!(manifest.contains("problem = poisson2d"));
}

#[test]
fn eigen_rows_leave_undefined_columns_empty() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_cfg(
        tmp.path(),
        "e.cfg",
        &TINY.replace("poisson2d", "eigen2d").replace("epochs = 2", "epochs = 1"),
    );
    let out = varsolve(&["run", cfg.to_str().unwrap(), "--out-dir", "e"], tmp.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let metrics = std::fs::read_to_string(tmp.path().join("e/metrics.csv")).unwrap();
    let last = metrics.lines().last().unwrap();
    let cols: Vec<&str> = last.split(',').collect();
    // relative errors are undefined for the zero-boundary reference: empty,
    // never zero; the eigenvalue error is present
    assert_eq!(cols[5], "");
    assert_eq!(cols[7], "");
    assert!(!cols[8].is_empty());
}

#[test]
fn unknown_problem_name_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_cfg(tmp.path(), "bad.cfg", &TINY.replace("poisson2d", "heat7d"));
    let out = varsolve(&["run", cfg.to_str().unwrap()], tmp.path());
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("heat7d"), "{err}");
}

#[test]
fn unknown_config_key_exits_2_and_names_it() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_cfg(tmp.path(), "bad.cfg", &format!("{TINY}frobnicate = 1\n"));
    let out = varsolve(&["run", cfg.to_str().unwrap()], tmp.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("frobnicate"));
}

#[test]
fn rerunning_reproduces_metrics_modulo_wall_clock() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_cfg(tmp.path(), "t.cfg", TINY);
    let strip_wall = |text: &str| -> Vec<String> {
        text.lines()
            .map(|l| l.rsplit_once(',').map_or(l.to_string(), |(head, _)| head.to_string()))
            .collect()
    };
    let out = varsolve(&["run", cfg.to_str().unwrap(), "--out-dir", "a"], tmp.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let out = varsolve(&["run", cfg.to_str().unwrap(), "--out-dir", "b"], tmp.path());
    assert!(out.status.success());
    let a = std::fs::read_to_string(tmp.path().join("a/metrics.csv")).unwrap();
    let b = std::fs::read_to_string(tmp.path().join("b/metrics.csv")).unwrap();
    assert_eq!(strip_wall(&a), strip_wall(&b));
    // wall_s differs between runs; everything else is deterministic
    let a_ckpt = std::fs::read(tmp.path().join("a/primal.ckpt")).unwrap();
    let b_ckpt = std::fs::read(tmp.path().join("b/primal.ckpt")).unwrap();
    assert_eq!(a_ckpt, b_ckpt);
}

#[test]
fn eval_matches_final_training_row_and_checks_dimensions() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_cfg(tmp.path(), "t.cfg", TINY);
    let out = varsolve(&["run", cfg.to_str().unwrap(), "--out-dir", "run"], tmp.path());
    assert!(out.status.success());
    let ckpt = tmp.path().join("run/primal.ckpt");

    let out = varsolve(
        &["eval", ckpt.to_str().unwrap(), "--problem", "poisson2d", "--h", "1/4"],
        tmp.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8_lossy(&out.stdout);
    let row = text.lines().nth(1).unwrap();
    let eval_err: f64 = row.split(',').nth(4).unwrap().parse().unwrap();

    let metrics = std::fs::read_to_string(tmp.path().join("run/metrics.csv")).unwrap();
    let last = metrics.lines().last().unwrap();
    let train_err: f64 = last.split(',').nth(4).unwrap().parse().unwrap();
    assert!(
        (eval_err - train_err).abs() <= 1e-12 * train_err.max(1.0),
        "eval {eval_err} vs training {train_err}"
    );

    // pointwise dump
    let pw = tmp.path().join("pw.csv");
    let out = varsolve(
        &[
            "eval",
            ckpt.to_str().unwrap(),
            "--problem",
            "poisson2d",
            "--h",
            "1/2",
            "--pointwise",
            pw.to_str().unwrap(),
        ],
        tmp.path(),
    );
    assert!(out.status.success());
    let dump = std::fs::read_to_string(&pw).unwrap();
    assert!(dump.lines().next().unwrap().starts_with("x0,x1,u_dl,u_ref,error"));
    assert_eq!(dump.lines().count(), 1 + 9, "3x3 lattice plus header");

    // dimension mismatch: 2-d checkpoint against a 3-d problem
    let out = varsolve(
        &["eval", ckpt.to_str().unwrap(), "--problem", "poisson3d", "--h", "1/4"],
        tmp.path(),
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn sweep_runs_children_and_writes_summary() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_cfg(tmp.path(), "s.cfg", TINY);
    let out = varsolve(
        &[
            "sweep",
            cfg.to_str().unwrap(),
            "--key",
            "beta0",
            "--values",
            "10",
            "100",
            "10",
            "--out-dir",
            "sw",
            "--jobs",
            "2",
        ],
        tmp.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("duplicate value"));
    let summary = std::fs::read_to_string(tmp.path().join("sw/summary.csv")).unwrap();
    let lines: Vec<&str> = summary.lines().collect();
    assert!(lines[0].starts_with("beta0,epoch,"));
    assert_eq!(lines.len(), 3, "two deduplicated values");
    assert!(tmp.path().join("sw/beta0=10/metrics.csv").exists());
    assert!(tmp.path().join("sw/beta0=100/metrics.csv").exists());
    // children see the overridden value
    let manifest = std::fs::read_to_string(tmp.path().join("sw/beta0=10/manifest")).unwrap();
    assert!(manifest.contains("beta0 = 1e1"));
}

#[test]
fn sweep_with_no_values_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_cfg(tmp.path(), "s.cfg", TINY);
    let out = varsolve(
        &["sweep", cfg.to_str().unwrap(), "--key", "beta0", "--values"],
        tmp.path(),
    );
    assert_eq!(out.status.code(), Some(2));
}

//! Run-directory layout: manifest, metrics.csv, checkpoints, point dumps.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use varsolve::checkpoint::{self, CkptHeader, Role};
use varsolve::config::TrainConfig;
use varsolve::error::{Error, Result};
use varsolve::field::ScalarField;
use varsolve::metrics::{ErrorReport, GridReference};
use varsolve::sampling::Grid;
use varsolve::training::TrainResult;

pub const METRICS_HEADER: &str =
    "epoch,loss,beta,lr,err_abs_in,err_rel_in,err_abs_bd,err_rel_bd,rho_rel_err,wall_s";

fn opt(v: Option<f64>) -> String {
    v.map_or(String::new(), |x| format!("{x:.10e}"))
}

pub fn metrics_row(r: &ErrorReport) -> String {
    format!(
        "{},{},{:.10e},{:.10e},{:.10e},{},{:.10e},{},{},{:.3}",
        r.epoch,
        opt(r.loss),
        r.beta,
        r.lr,
        r.err_abs_in,
        opt(r.err_rel_in),
        r.err_abs_bd,
        opt(r.err_rel_bd),
        opt(r.rho_rel_err),
        r.wall_s
    )
}

pub fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

/// Priority: `--out-dir` flag, then the config's `out_dir`, then
/// `$VARSOLVE_OUT/<config stem>`, then `runs/<config stem>`.
pub fn resolve_out_dir(cfg: &TrainConfig, config_path: &Path, flag: Option<PathBuf>) -> Result<PathBuf> {
    if let Some(dir) = flag {
        return Ok(dir);
    }
    if let Some(dir) = &cfg.out_dir {
        return Ok(PathBuf::from(dir));
    }
    let stem = config_path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("run")
        .to_string();
    let root = std::env::var("VARSOLVE_OUT").unwrap_or_else(|_| "runs".to_string());
    Ok(PathBuf::from(root).join(stem))
}

pub fn write_run_outputs(dir: &Path, cfg: &TrainConfig, result: &TrainResult, started: u64) -> Result<()> {
    write_metrics(&dir.join("metrics.csv"), &result.reports)?;
    let primal_cfg_header = CkptHeader {
        input_dim: cfg.spec()?.dim,
        width: cfg.primal_width,
        depth: cfg.primal_depth,
        role: Role::Primal,
        seed: cfg.seed,
    };
    checkpoint::write_binary(&dir.join("primal.ckpt"), &primal_cfg_header, &result.primal)?;
    let mult_header = CkptHeader {
        input_dim: cfg.spec()?.dim,
        width: cfg.multiplier_width,
        depth: cfg.multiplier_depth,
        role: Role::Multiplier,
        seed: cfg.seed,
    };
    checkpoint::write_binary(&dir.join("multiplier.ckpt"), &mult_header, &result.multiplier)?;
    write_manifest(&dir.join("manifest"), cfg, result, started)?;
    Ok(())
}

pub fn write_metrics(path: &Path, reports: &[ErrorReport]) -> Result<()> {
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    for r in reports {
        out.push_str(&metrics_row(r));
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

fn write_manifest(path: &Path, cfg: &TrainConfig, result: &TrainResult, started: u64) -> Result<()> {
    let mut m = String::new();
    let _ = writeln!(m, "varsolve-manifest v1");
    let _ = writeln!(m, "version = {}", env!("CARGO_PKG_VERSION"));
    let _ = writeln!(m, "started_unix = {started}");
    let _ = writeln!(m, "finished_unix = {}", unix_now());
    let _ = writeln!(m, "status = ok");
    let _ = writeln!(m, "primal_steps = {}", result.primal_steps);
    let _ = writeln!(m, "multiplier_steps = {}", result.multiplier_steps);
    let _ = writeln!(m, "final_beta = {:.10e}", result.final_beta);
    let _ = writeln!(m, "wall_s = {:.3}", result.wall_s);
    let _ = writeln!(m, "# resolved configuration");
    let _ = writeln!(m, "problem = {}", cfg.problem);
    let _ = writeln!(m, "method = {}", cfg.method);
    let _ = writeln!(m, "seed = {}", cfg.seed);
    let _ = writeln!(m, "beta0 = {:e}", cfg.beta0);
    let _ = writeln!(m, "alpha = {}", cfg.alpha);
    let _ = writeln!(m, "epochs = {}", cfg.epochs);
    let _ = writeln!(m, "epochs_primal = {}", cfg.epochs_primal);
    let _ = writeln!(m, "epochs_multiplier = {}", cfg.epochs_multiplier);
    let _ = writeln!(m, "batch_interior = {}", cfg.batch_interior);
    let _ = writeln!(m, "boundary_points_per_face = {}", cfg.boundary_points_per_face);
    let _ = writeln!(m, "lr_base = {:e}", cfg.lr_base);
    let _ = writeln!(m, "lr_base_multiplier = {:e}", cfg.lr_base_multiplier);
    let _ = writeln!(m, "lr_decay_factor = {}", cfg.lr_decay_factor);
    let _ = writeln!(m, "lr_decay_total_steps = {}", cfg.lr_decay_total_steps);
    let _ = writeln!(m, "grid_h = {:e}", cfg.grid_h);
    let _ = writeln!(m, "eval_every = {}", cfg.eval_every);
    let _ = writeln!(m, "primal_width = {}", cfg.primal_width);
    let _ = writeln!(m, "primal_depth = {}", cfg.primal_depth);
    let _ = writeln!(m, "multiplier_width = {}", cfg.multiplier_width);
    let _ = writeln!(m, "multiplier_depth = {}", cfg.multiplier_depth);
    let _ = writeln!(m, "exact_bc = {}", cfg.exact_bc);
    std::fs::write(path, m)?;
    Ok(())
}

/// Per-point dump: coordinates, approximation, reference, absolute error.
pub fn write_pointwise(
    path: &Path,
    field: &dyn ScalarField,
    reference: &GridReference,
    grid: &Grid,
) -> Result<()> {
    let vals = field.eval_many(grid.points.view());
    let mut out = String::new();
    for j in 0..grid.dim {
        let _ = write!(out, "x{j},");
    }
    out.push_str("u_dl,u_ref,error\n");
    for (i, row) in grid.points.rows().into_iter().enumerate() {
        for &c in row {
            let _ = write!(out, "{c:.10e},");
        }
        let _ = writeln!(
            out,
            "{:.10e},{:.10e},{:.10e}",
            vals[i],
            reference.values[i],
            (vals[i] - reference.values[i]).abs()
        );
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn read_last_metrics_row(path: &Path) -> Result<String> {
    let text = std::fs::read_to_string(path)?;
    text.lines()
        .filter(|l| !l.is_empty())
        .last()
        .filter(|l| *l != METRICS_HEADER)
        .map(str::to_string)
        .ok_or_else(|| Error::Config(format!("no metrics rows in {}", path.display())))
}

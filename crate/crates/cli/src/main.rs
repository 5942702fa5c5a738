//! `varsolve`: experiment runner for the variational solver toolkit.
//!
//! Subcommands: `run` executes one training configuration, `sweep` runs one
//! child per value of a config key (optionally in parallel processes), and
//! `eval` scores a checkpoint on a problem's evaluation lattice.

mod output;
mod sweep;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use varsolve::checkpoint;
use varsolve::config::{load_config, parse_h};
use varsolve::error::Error;
use varsolve::metrics::{eigen_error, elliptic_errors, ErrorReport};
use varsolve::network::NetField;
use varsolve::problems::builtin;
use varsolve::sampling::grid_points;
use varsolve::training;

#[derive(Parser)]
#[command(name = "varsolve", version, about = "Neural-network solvers for variational problems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one training configuration and write metrics + checkpoints.
    Run {
        /// Flat key = value configuration file.
        config: PathBuf,
        /// Output directory (overrides the config and VARSOLVE_OUT).
        #[arg(long)]
        out_dir: Option<PathBuf>,
        /// Master seed override.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run one child per value of a config key, plus a summary table.
    Sweep {
        config: PathBuf,
        /// Config key to vary (e.g. beta0).
        #[arg(long)]
        key: String,
        /// Values for the key.
        #[arg(long, num_args = 0.., value_name = "VALUE")]
        values: Vec<String>,
        /// Children to run concurrently.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[arg(long)]
        out_dir: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Evaluate a checkpoint on a problem's lattice and print one CSV row.
    Eval {
        checkpoint: PathBuf,
        /// Problem name (poisson2d, eigen2d, gp2d, ...).
        #[arg(long)]
        problem: String,
        /// Lattice spacing, decimal or fraction (e.g. 1/64).
        #[arg(long)]
        h: String,
        /// Also dump per-point values to this CSV file.
        #[arg(long)]
        pointwise: Option<PathBuf>,
        /// Reference lattice size for the nonlinear family.
        #[arg(long, default_value_t = 128)]
        gp_reference_n: usize,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config, out_dir, seed } => cmd_run(&config, out_dir, seed),
        Command::Sweep { config, key, values, jobs, out_dir, seed } => {
            sweep::cmd_sweep(&config, &key, &values, jobs, out_dir, seed)
        }
        Command::Eval { checkpoint, problem, h, pointwise, gp_reference_n } => {
            cmd_eval(&checkpoint, &problem, &h, pointwise.as_deref(), gp_reference_n)
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: code={} kind={} msg={:?}", exit_code(&e), kind(&e), e.to_string());
            ExitCode::from(exit_code(&e))
        }
    }
}

pub(crate) fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Checkpoint(_) | Error::Dimension(_) => 2,
        Error::Numeric(_) | Error::Degenerate(_) | Error::NoConvergence(_) => 3,
        Error::Io(_) => 1,
    }
}

fn kind(e: &Error) -> &'static str {
    match e {
        Error::Config(_) => "config",
        Error::Checkpoint(_) => "checkpoint",
        Error::Dimension(_) => "dimension",
        Error::Numeric(_) => "numeric",
        Error::Degenerate(_) => "degenerate",
        Error::NoConvergence(_) => "no-convergence",
        Error::Io(_) => "io",
    }
}

fn cmd_run(config: &PathBuf, out_dir: Option<PathBuf>, seed: Option<u64>) -> Result<(), Error> {
    let mut cfg = load_config(config)?;
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    let dir = output::resolve_out_dir(&cfg, config, out_dir)?;
    std::fs::create_dir_all(&dir)?;
    let started = output::unix_now();
    let result = training::run(&cfg)?;
    output::write_run_outputs(&dir, &cfg, &result, started)?;
    println!("run complete: {}", dir.display());
    Ok(())
}

fn cmd_eval(
    ckpt_path: &PathBuf,
    problem: &str,
    h_text: &str,
    pointwise: Option<&std::path::Path>,
    gp_reference_n: usize,
) -> Result<(), Error> {
    let (header, params) = checkpoint::read_binary(ckpt_path)?;
    let spec = builtin(problem)?;
    if header.input_dim != spec.dim {
        return Err(Error::Config(format!(
            "checkpoint has input dimension {}, problem {problem} has {}",
            header.input_dim, spec.dim
        )));
    }
    let h = parse_h(h_text)?;
    let grid = grid_points(spec.dim, h)?;
    let cfg = header.config()?;
    let field = NetField::new(cfg, params)?;
    let reference = training::resolve_reference(&spec, &grid, gp_reference_n)?;
    let report = match spec.family {
        varsolve::Family::Elliptic => {
            let (ea_in, er_in, ea_bd, er_bd) = elliptic_errors(&field, &reference, &grid)?;
            ErrorReport {
                epoch: 0,
                loss: None,
                beta: 0.0,
                lr: 0.0,
                err_abs_in: ea_in,
                err_rel_in: er_in,
                err_abs_bd: ea_bd,
                err_rel_bd: er_bd,
                rho_rel_err: None,
                wall_s: 0.0,
            }
        }
        _ => {
            let (ea_in, ea_bd, rho) = eigen_error(&field, &spec, &grid, &reference)?;
            ErrorReport {
                epoch: 0,
                loss: None,
                beta: 0.0,
                lr: 0.0,
                err_abs_in: ea_in,
                err_rel_in: None,
                err_abs_bd: ea_bd,
                err_rel_bd: None,
                rho_rel_err: rho,
                wall_s: 0.0,
            }
        }
    };
    println!("{}", output::METRICS_HEADER);
    println!("{}", output::metrics_row(&report));
    if let Some(path) = pointwise {
        output::write_pointwise(path, &field, &reference, &grid)?;
    }
    Ok(())
}

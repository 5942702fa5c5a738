//! Parameter sweeps: one child process per value, children isolated in
//! their own subdirectories, plus a summary table of final errors.

use std::collections::HashSet;
use std::path::{Path, PathBuf};
use std::process::Command;

use varsolve::config::{parse_pairs, resolve};
use varsolve::error::{Error, Result};

use crate::output;

pub fn cmd_sweep(
    config: &Path,
    key: &str,
    values: &[String],
    jobs: usize,
    out_dir: Option<PathBuf>,
    seed: Option<u64>,
) -> Result<()> {
    let text = std::fs::read_to_string(config)?;
    let pairs = parse_pairs(&text)?;

    // deduplicate while keeping order
    let mut seen = HashSet::new();
    let mut unique = Vec::new();
    for v in values {
        if seen.insert(v.clone()) {
            unique.push(v.clone());
        } else {
            eprintln!("warning: duplicate value {v:?} ignored");
        }
    }
    if unique.is_empty() {
        return Err(Error::Config("sweep needs at least one value (--values)".into()));
    }

    let root = match out_dir {
        Some(dir) => dir,
        None => {
            let stem = config.file_stem().and_then(|s| s.to_str()).unwrap_or("sweep");
            let base = std::env::var("VARSOLVE_OUT").unwrap_or_else(|_| "runs".to_string());
            PathBuf::from(base).join(format!("{stem}-sweep"))
        }
    };
    std::fs::create_dir_all(&root)?;

    // validate each child config up front so a bad key fails before any run
    let mut children = Vec::new();
    for value in &unique {
        let mut child_pairs: Vec<(String, String)> = pairs
            .iter()
            .filter(|(k, _)| k != key && k != "out_dir")
            .cloned()
            .collect();
        child_pairs.push((key.to_string(), value.clone()));
        resolve(&child_pairs)?;
        let dir = root.join(format!("{key}={value}"));
        std::fs::create_dir_all(&dir)?;
        let cfg_path = dir.join("config.cfg");
        let mut text = String::new();
        for (k, v) in &child_pairs {
            text.push_str(&format!("{k} = {v}\n"));
        }
        std::fs::write(&cfg_path, text)?;
        children.push((value.clone(), dir, cfg_path));
    }

    let exe = std::env::current_exe()?;
    let jobs = jobs.max(1);
    let mut first_failure: Option<i32> = None;
    for chunk in children.chunks(jobs) {
        let mut running = Vec::new();
        for (value, dir, cfg_path) in chunk {
            let mut cmd = Command::new(&exe);
            cmd.arg("run").arg(cfg_path).arg("--out-dir").arg(dir);
            if let Some(seed) = seed {
                cmd.arg("--seed").arg(seed.to_string());
            }
            let child = cmd.spawn()?;
            running.push((value.clone(), child));
        }
        for (value, mut child) in running {
            let status = child.wait()?;
            if !status.success() {
                eprintln!("sweep child {key}={value} failed with {status}");
                first_failure.get_or_insert(status.code().unwrap_or(1));
            }
        }
    }

    // summary of final metric rows, mirroring the per-run CSV schema
    let mut summary = format!("{},{}\n", key, output::METRICS_HEADER);
    for (value, dir, _) in &children {
        match output::read_last_metrics_row(&dir.join("metrics.csv")) {
            Ok(row) => summary.push_str(&format!("{value},{row}\n")),
            Err(_) => summary.push_str(&format!("{value},\n")),
        }
    }
    std::fs::write(root.join("summary.csv"), summary)?;
    println!("sweep complete: {}", root.display());

    if let Some(code) = first_failure {
        // surface the child failure (aggregated)
        return Err(match code {
            2 => Error::Config(format!("{key} sweep: a child failed with a configuration error")),
            _ => Error::Numeric(format!("{key} sweep: a child failed (exit {code})")),
        });
    }
    Ok(())
}

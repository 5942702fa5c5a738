//! Flat `key = value` experiment configuration.
//!
//! The format is one `key = value` pair per line, `#` comments, blank lines
//! ignored. Keys are grouped by module in the documentation (see
//! `docs/config.md` in the repository) but the file itself is flat for
//! cross-language parse simplicity. Unknown or duplicate keys are errors
//! that name the key.

use std::collections::HashSet;
use std::path::Path;

use crate::error::{Error, Result};
use crate::problems::{builtin, Family, MultiplierSign, ProblemSpec};
use crate::optimizer::AdamParams;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    Aldl,
    Pmdl,
    Sgda,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Method::Aldl => write!(f, "aldl"),
            Method::Pmdl => write!(f, "pmdl"),
            Method::Sgda => write!(f, "sgda"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MultiplierInit {
    Random,
    Zero,
}

/// Fully resolved training configuration.
#[derive(Clone, Debug)]
pub struct TrainConfig {
    pub problem: String,
    pub method: Method,
    pub seed: u64,
    /// Initial penalty strength.
    pub beta0: f64,
    /// Penalty growth per outer iteration (>= 1).
    pub alpha: f64,
    /// Outer iterations (alternating method), or total steps (penalty).
    pub epochs: u64,
    /// Primal steps per outer iteration.
    pub epochs_primal: u64,
    /// Multiplier steps per outer iteration.
    pub epochs_multiplier: u64,
    pub batch_interior: usize,
    pub boundary_points_per_face: usize,
    pub lr_base: f64,
    /// Multiplier-side base rate; defaults to `lr_base`.
    pub lr_base_multiplier: f64,
    pub adam: AdamParams,
    pub lr_decay_factor: f64,
    pub lr_decay_total_steps: u64,
    pub grid_h: f64,
    /// Evaluation cadence in steps (penalty / descent-ascent methods).
    pub eval_every: u64,
    pub multiplier_init: MultiplierInit,
    /// Keep Adam moments across outer iterations (warm start).
    pub adam_warm_start: bool,
    pub j_lambda_sign: MultiplierSign,
    /// Ascent steps per descent step in the descent-ascent method.
    pub sgda_ascent_ratio: u64,
    /// Compose the primal network with the boundary cutoff.
    pub exact_bc: bool,
    pub primal_width: usize,
    pub primal_depth: usize,
    pub multiplier_width: usize,
    pub multiplier_depth: usize,
    /// Lattice size of the reference ground-state solve (nonlinear family).
    pub gp_reference_n: usize,
    pub out_dir: Option<String>,
    /// Record a per-step hash of the primal iterates (test instrumentation).
    pub trace_params: bool,
}

impl TrainConfig {
    /// Paper-protocol defaults for one problem: network sizes, batch sizes
    /// and learning rate depend on the family and dimension.
    pub fn defaults(problem: &str) -> Result<TrainConfig> {
        let spec = builtin(problem)?;
        Ok(TrainConfig {
            problem: problem.to_string(),
            method: Method::Aldl,
            seed: 0,
            beta0: 100.0,
            alpha: 1.0,
            epochs: 500,
            epochs_primal: 100,
            epochs_multiplier: 100,
            batch_interior: if spec.dim == 3 { 2048 } else { 512 },
            boundary_points_per_face: if spec.dim == 3 { 256 } else { 64 },
            lr_base: default_lr(&spec),
            lr_base_multiplier: default_lr(&spec),
            adam: AdamParams::default(),
            lr_decay_factor: 0.01,
            lr_decay_total_steps: 50_000,
            grid_h: 1.0 / 64.0,
            eval_every: 100,
            multiplier_init: MultiplierInit::Random,
            adam_warm_start: true,
            j_lambda_sign: MultiplierSign::Minus,
            sgda_ascent_ratio: 1,
            exact_bc: false,
            primal_width: 50,
            primal_depth: 6,
            multiplier_width: 50,
            multiplier_depth: 2,
            gp_reference_n: if spec.dim == 3 { 64 } else { 128 },
            out_dir: None,
            trace_params: false,
        })
    }

    pub fn spec(&self) -> Result<ProblemSpec> {
        builtin(&self.problem)
    }

    pub fn validate(&self) -> Result<()> {
        let spec = self.spec()?;
        if self.beta0.is_nan() || self.beta0 <= 0.0 {
            return Err(Error::Config(format!("beta0 must be positive, got {}", self.beta0)));
        }
        if self.alpha.is_nan() || self.alpha < 1.0 {
            return Err(Error::Config(format!("alpha must be >= 1, got {}", self.alpha)));
        }
        if self.batch_interior == 0 || self.boundary_points_per_face == 0 {
            return Err(Error::Config("batch sizes must be positive".into()));
        }
        if self.lr_base.is_nan() || self.lr_base <= 0.0 {
            return Err(Error::Config(format!("lr_base must be positive, got {}", self.lr_base)));
        }
        if self.lr_base_multiplier < 0.0 {
            return Err(Error::Config("lr_base_multiplier must be >= 0".into()));
        }
        if self.sgda_ascent_ratio == 0 {
            return Err(Error::Config("sgda_ascent_ratio must be >= 1".into()));
        }
        if self.exact_bc && spec.family == Family::Elliptic {
            // the cutoff enforces a homogeneous condition; the elliptic
            // built-ins have g != 0
            return Err(Error::Config(
                "exact_bc requires a homogeneous boundary condition (eigen families)".into(),
            ));
        }
        crate::sampling::grid_points(1, self.grid_h).map(|_| ())?;
        Ok(())
    }
}

fn default_lr(spec: &ProblemSpec) -> f64 {
    match spec.family {
        Family::NonlinearEigen => 5e-4,
        _ => 1e-3,
    }
}

/// Parse the flat `key = value` syntax, preserving order.
pub fn parse_pairs(text: &str) -> Result<Vec<(String, String)>> {
    let mut pairs = Vec::new();
    let mut seen = HashSet::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::Config(format!("line {}: expected key = value, got {raw:?}", lineno + 1))
        })?;
        let key = key.trim().to_string();
        let value = value.trim().to_string();
        if key.is_empty() {
            return Err(Error::Config(format!("line {}: empty key", lineno + 1)));
        }
        if !seen.insert(key.clone()) {
            return Err(Error::Config(format!("duplicate key {key}")));
        }
        pairs.push((key, value));
    }
    Ok(pairs)
}

fn parse_as<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("bad value for key {key}: {value:?}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(Error::Config(format!("bad value for key {key}: expected true or false, got {value:?}"))),
    }
}

/// Resolve key/value pairs into a full configuration. `problem` must come
/// first in spirit: defaults depend on it, so it is read in a first pass.
pub fn resolve(pairs: &[(String, String)]) -> Result<TrainConfig> {
    let problem = pairs
        .iter()
        .find(|(k, _)| k == "problem")
        .map(|(_, v)| v.clone())
        .ok_or_else(|| Error::Config("missing required key problem".into()))?;
    let mut cfg = TrainConfig::defaults(&problem)?;
    let mut have_method = false;
    let mut lr_mult_set = false;
    for (key, value) in pairs {
        match key.as_str() {
            "problem" => {}
            "method" => {
                cfg.method = match value.as_str() {
                    "aldl" => Method::Aldl,
                    "pmdl" => Method::Pmdl,
                    "sgda" => Method::Sgda,
                    _ => {
                        return Err(Error::Config(format!(
                            "bad value for key method: expected aldl, pmdl, or sgda, got {value:?}"
                        )))
                    }
                };
                have_method = true;
            }
            "seed" => cfg.seed = parse_as(key, value)?,
            "beta0" | "beta" => cfg.beta0 = parse_as(key, value)?,
            "alpha" => cfg.alpha = parse_as(key, value)?,
            "epochs" => cfg.epochs = parse_as(key, value)?,
            "epochs_primal" => cfg.epochs_primal = parse_as(key, value)?,
            "epochs_multiplier" => cfg.epochs_multiplier = parse_as(key, value)?,
            "batch_interior" => cfg.batch_interior = parse_as(key, value)?,
            "boundary_points_per_face" => cfg.boundary_points_per_face = parse_as(key, value)?,
            "lr_base" => cfg.lr_base = parse_as(key, value)?,
            "lr_base_multiplier" => {
                cfg.lr_base_multiplier = parse_as(key, value)?;
                lr_mult_set = true;
            }
            "adam_beta1" => cfg.adam.beta1 = parse_as(key, value)?,
            "adam_beta2" => cfg.adam.beta2 = parse_as(key, value)?,
            "adam_eps" => cfg.adam.eps = parse_as(key, value)?,
            "lr_decay_factor" => cfg.lr_decay_factor = parse_as(key, value)?,
            "lr_decay_total_steps" => cfg.lr_decay_total_steps = parse_as(key, value)?,
            "grid_h" => cfg.grid_h = parse_h(value)?,
            "eval_every" => cfg.eval_every = parse_as(key, value)?,
            "multiplier_init" => {
                cfg.multiplier_init = match value.as_str() {
                    "random" => MultiplierInit::Random,
                    "zero" => MultiplierInit::Zero,
                    _ => {
                        return Err(Error::Config(format!(
                            "bad value for key multiplier_init: expected random or zero, got {value:?}"
                        )))
                    }
                }
            }
            "adam_warm_start" => cfg.adam_warm_start = parse_bool(key, value)?,
            "j_lambda_sign" => {
                cfg.j_lambda_sign = match value.as_str() {
                    "minus" => MultiplierSign::Minus,
                    "plus" => MultiplierSign::Plus,
                    _ => {
                        return Err(Error::Config(format!(
                            "bad value for key j_lambda_sign: expected minus or plus, got {value:?}"
                        )))
                    }
                }
            }
            "sgda_ascent_ratio" => cfg.sgda_ascent_ratio = parse_as(key, value)?,
            "exact_bc" => cfg.exact_bc = parse_bool(key, value)?,
            "primal_width" => cfg.primal_width = parse_as(key, value)?,
            "primal_depth" => cfg.primal_depth = parse_as(key, value)?,
            "multiplier_width" => cfg.multiplier_width = parse_as(key, value)?,
            "multiplier_depth" => cfg.multiplier_depth = parse_as(key, value)?,
            "gp_reference_n" => cfg.gp_reference_n = parse_as(key, value)?,
            "out_dir" => cfg.out_dir = Some(value.clone()),
            other => return Err(Error::Config(format!("unknown config key {other}"))),
        }
    }
    if !have_method {
        return Err(Error::Config("missing required key method".into()));
    }
    if !lr_mult_set {
        cfg.lr_base_multiplier = cfg.lr_base;
    }
    if cfg.method == Method::Pmdl
        && !pairs.iter().any(|(k, _)| k == "epochs")
    {
        // the penalty baseline counts plain steps; its protocol default
        cfg.epochs = 50_000;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Grid spacings may be written as a decimal (`0.015625`) or a fraction
/// (`1/64`).
pub fn parse_h(value: &str) -> Result<f64> {
    let h = if let Some((num, den)) = value.split_once('/') {
        let num: f64 = parse_as("grid_h", num.trim())?;
        let den: f64 = parse_as("grid_h", den.trim())?;
        num / den
    } else {
        parse_as("grid_h", value)?
    };
    if h.is_nan() || h <= 0.0 || h > 1.0 {
        return Err(Error::Config(format!("grid spacing {value:?} out of (0, 1]")));
    }
    Ok(h)
}

pub fn load_config(path: &Path) -> Result<TrainConfig> {
    let text = std::fs::read_to_string(path)?;
    resolve(&parse_pairs(&text)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_resolves_with_defaults() {
        let pairs = parse_pairs("problem = poisson2d\nmethod = aldl\nbeta0 = 1e2\n").unwrap();
        let cfg = resolve(&pairs).unwrap();
        assert_eq!(cfg.beta0, 100.0);
        assert_eq!(cfg.batch_interior, 512);
        assert_eq!(cfg.boundary_points_per_face, 64);
        assert_eq!(cfg.lr_base, 1e-3);
        assert_eq!(cfg.epochs, 500);
        assert_eq!(cfg.primal_width, 50);
        assert_eq!(cfg.primal_depth, 6);
        assert_eq!(cfg.multiplier_depth, 2);
    }

    #[test]
    fn dimension_and_family_defaults() {
        let cfg = resolve(&parse_pairs("problem = poisson3d\nmethod = pmdl\n").unwrap()).unwrap();
        assert_eq!(cfg.batch_interior, 2048);
        assert_eq!(cfg.boundary_points_per_face, 256);
        assert_eq!(cfg.epochs, 50_000);
        let cfg = resolve(&parse_pairs("problem = gp2d\nmethod = aldl\n").unwrap()).unwrap();
        assert_eq!(cfg.lr_base, 5e-4);
    }

    #[test]
    fn unknown_key_is_named_in_the_error() {
        let pairs = parse_pairs("problem = poisson2d\nmethod = aldl\nbogus_key = 3\n").unwrap();
        match resolve(&pairs) {
            Err(Error::Config(msg)) => assert!(msg.contains("bogus_key")),
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn duplicate_and_malformed_lines_are_rejected() {
        assert!(parse_pairs("a = 1\na = 2\n").is_err());
        assert!(parse_pairs("just some text\n").is_err());
        // comments and blanks are fine
        let pairs = parse_pairs("# comment\n\nproblem = eigen2d\nmethod = sgda\n").unwrap();
        assert_eq!(pairs.len(), 2);
    }

    #[test]
    fn beta_alias_and_fractional_h() {
        let cfg = resolve(
            &parse_pairs("problem = poisson2d\nmethod = aldl\nbeta = 20\ngrid_h = 1/32\n").unwrap(),
        )
        .unwrap();
        assert_eq!(cfg.beta0, 20.0);
        assert_eq!(cfg.grid_h, 1.0 / 32.0);
    }

    #[test]
    fn invalid_values_are_rejected() {
        let base = "problem = poisson2d\nmethod = aldl\n";
        for bad in ["beta0 = -1", "alpha = 0.5", "batch_interior = 0", "grid_h = 0.3"] {
            let pairs = parse_pairs(&format!("{base}{bad}\n")).unwrap();
            assert!(resolve(&pairs).is_err(), "{bad} should fail");
        }
        assert!(resolve(&parse_pairs("problem = nosuch\nmethod = aldl\n").unwrap()).is_err());
    }

    #[test]
    fn exact_bc_rejected_for_inhomogeneous_boundary() {
        let pairs =
            parse_pairs("problem = poisson2d\nmethod = pmdl\nexact_bc = true\n").unwrap();
        assert!(resolve(&pairs).is_err());
        let pairs = parse_pairs("problem = gp2d\nmethod = pmdl\nexact_bc = true\n").unwrap();
        assert!(resolve(&pairs).is_ok());
    }
}

//! Training drivers: the alternating augmented Lagrangian method, the
//! penalty baseline, and simultaneous gradient descent ascent.
//!
//! Randomness is split into fixed streams of the master seed so the three
//! methods stay comparable: stream 0 initializes the primal network,
//! stream 1 the multiplier, stream 2 feeds primal/descent batches, and
//! stream 3 feeds multiplier/ascent batches. In particular the alternating
//! method with a disabled multiplier phase consumes stream 2 exactly like
//! the penalty method, which makes the two iterate sequences bit-identical.

use std::time::Instant;

use ndarray::Array2;
use rand_chacha::ChaCha8Rng;

use crate::config::{Method, MultiplierInit, TrainConfig};
use crate::diffengine::grad_params;
use crate::error::{Error, Result};
use crate::field::{CutoffField, ScalarField};
use crate::metrics::{eigen_error, elliptic_errors, ErrorReport, GridReference};
use crate::network::{init_params_from_rng, NetField, ParamVector, ResNetConfig};
use crate::optimizer::{AdamState, LrSchedule};
use crate::oracle::{fd_gp_ground_state, OracleField};
use crate::problems::{
    j_lambda, lagrangian, penalty_objective, Family, LossBatches, NetRef, PrimalRef, ProblemSpec,
};
use crate::sampling::{grid_points, sample_boundary, sample_interior, stream_rng, Batch, Grid};

const STREAM_INIT_PRIMAL: u64 = 0;
const STREAM_INIT_MULTIPLIER: u64 = 1;
const STREAM_PRIMAL_BATCHES: u64 = 2;
const STREAM_MULTIPLIER_BATCHES: u64 = 3;

/// Final state and evaluation series of one training run.
#[derive(Clone, Debug)]
pub struct TrainResult {
    pub primal: ParamVector,
    pub multiplier: ParamVector,
    pub reports: Vec<ErrorReport>,
    pub final_beta: f64,
    pub wall_s: f64,
    pub primal_steps: u64,
    pub multiplier_steps: u64,
    /// Per-step hash of the primal iterates when tracing is enabled.
    pub param_trace: Option<Vec<u64>>,
}

/// Run the configured method.
pub fn run(cfg: &TrainConfig) -> Result<TrainResult> {
    run_with_reference(cfg, None)
}

/// Like [`run`], reusing a precomputed evaluation reference (the nonlinear
/// family's ground-state solve is expensive enough to share across runs).
pub fn run_with_reference(cfg: &TrainConfig, reference: Option<GridReference>) -> Result<TrainResult> {
    cfg.validate()?;
    match cfg.method {
        Method::Aldl => Driver::new(cfg, reference)?.run_aldl(),
        Method::Pmdl => Driver::new(cfg, reference)?.run_pmdl(),
        Method::Sgda => Driver::new(cfg, reference)?.run_sgda(),
    }
}

/// Algorithm driver: alternating multiplier projection and primal descent.
pub fn run_aldl(cfg: &TrainConfig) -> Result<TrainResult> {
    let mut cfg = cfg.clone();
    cfg.method = Method::Aldl;
    run(&cfg)
}

/// Penalty baseline: `epochs` descent steps on the penalty objective.
pub fn run_pmdl(cfg: &TrainConfig) -> Result<TrainResult> {
    let mut cfg = cfg.clone();
    cfg.method = Method::Pmdl;
    run(&cfg)
}

/// Simultaneous stochastic gradient descent ascent on the saddle problem.
pub fn run_sgda(cfg: &TrainConfig) -> Result<TrainResult> {
    let mut cfg = cfg.clone();
    cfg.method = Method::Sgda;
    run(&cfg)
}

struct Driver {
    cfg: TrainConfig,
    spec: ProblemSpec,
    primal_cfg: ResNetConfig,
    mult_cfg: ResNetConfig,
    grid: Grid,
    reference: GridReference,
    rng_primal: ChaCha8Rng,
    rng_mult: ChaCha8Rng,
    theta_u: ParamVector,
    theta_mu: ParamVector,
    adam_u: AdamState,
    adam_mu: AdamState,
    sched_u: LrSchedule,
    sched_mu: LrSchedule,
    u_steps: u64,
    mu_steps: u64,
    last_loss: Option<f64>,
    reports: Vec<ErrorReport>,
    trace: Option<Vec<u64>>,
    start: Instant,
}

impl Driver {
    fn new(cfg: &TrainConfig, reference: Option<GridReference>) -> Result<Self> {
        let spec = cfg.spec()?;
        let primal_cfg = ResNetConfig::new(spec.dim, cfg.primal_width, cfg.primal_depth)?;
        let mult_cfg = ResNetConfig::new(spec.dim, cfg.multiplier_width, cfg.multiplier_depth)?;
        let grid = grid_points(spec.dim, cfg.grid_h)?;
        let reference = match reference {
            Some(r) => r,
            None => resolve_reference(&spec, &grid, cfg.gp_reference_n)?,
        };
        let theta_u = init_params_from_rng(&primal_cfg, &mut stream_rng(cfg.seed, STREAM_INIT_PRIMAL));
        let theta_mu = match cfg.multiplier_init {
            MultiplierInit::Random => {
                init_params_from_rng(&mult_cfg, &mut stream_rng(cfg.seed, STREAM_INIT_MULTIPLIER))
            }
            MultiplierInit::Zero => ParamVector::zeros(mult_cfg.param_len()),
        };
        let adam_u = AdamState::new(theta_u.len(), cfg.adam);
        let adam_mu = AdamState::new(theta_mu.len(), cfg.adam);
        let decay_steps = cfg.lr_decay_total_steps as f64;
        Ok(Driver {
            spec,
            primal_cfg,
            mult_cfg,
            grid,
            reference,
            rng_primal: stream_rng(cfg.seed, STREAM_PRIMAL_BATCHES),
            rng_mult: stream_rng(cfg.seed, STREAM_MULTIPLIER_BATCHES),
            theta_u,
            theta_mu,
            adam_u,
            adam_mu,
            sched_u: LrSchedule::new(cfg.lr_base, cfg.lr_decay_factor, decay_steps),
            sched_mu: LrSchedule::new(cfg.lr_base_multiplier, cfg.lr_decay_factor, decay_steps),
            u_steps: 0,
            mu_steps: 0,
            last_loss: None,
            reports: Vec::new(),
            trace: cfg.trace_params.then(Vec::new),
            start: Instant::now(),
            cfg: cfg.clone(),
        })
    }

    fn primal_field(&self, params: &ParamVector) -> Box<dyn ScalarField> {
        let net = NetField::new(self.primal_cfg.clone(), params.clone()).expect("sized at init");
        if self.cfg.exact_bc {
            Box::new(CutoffField(net))
        } else {
            Box::new(net)
        }
    }

    fn record(&mut self, epoch: u64, beta: f64) -> Result<()> {
        let field = self.primal_field(&self.theta_u);
        let lr = self.sched_u.at(self.u_steps);
        let report = match self.spec.family {
            Family::Elliptic => {
                let (ea_in, er_in, ea_bd, er_bd) =
                    elliptic_errors(field.as_ref(), &self.reference, &self.grid)?;
                ErrorReport {
                    epoch,
                    loss: self.last_loss,
                    beta,
                    lr,
                    err_abs_in: ea_in,
                    err_rel_in: er_in,
                    err_abs_bd: ea_bd,
                    err_rel_bd: er_bd,
                    rho_rel_err: None,
                    wall_s: self.start.elapsed().as_secs_f64(),
                }
            }
            _ => {
                let (ea_in, ea_bd, rho_rel) =
                    eigen_error(field.as_ref(), &self.spec, &self.grid, &self.reference)?;
                ErrorReport {
                    epoch,
                    loss: self.last_loss,
                    beta,
                    lr,
                    err_abs_in: ea_in,
                    err_rel_in: None,
                    err_abs_bd: ea_bd,
                    err_rel_bd: None,
                    rho_rel_err: rho_rel,
                    wall_s: self.start.elapsed().as_secs_f64(),
                }
            }
        };
        self.reports.push(report);
        Ok(())
    }

    /// Interior/normalization/pairing/boundary draws, in this fixed order.
    fn draw_batches(rng: &mut ChaCha8Rng, spec: &ProblemSpec, cfg: &TrainConfig) -> (Batch, Option<Array2<f64>>, Option<Array2<f64>>) {
        let d = spec.dim;
        let interior = sample_interior(d, cfg.batch_interior, rng);
        let normalization = spec
            .is_eigen()
            .then(|| sample_interior(d, cfg.batch_interior, rng));
        let pairing = (spec.family == Family::NonlinearEigen)
            .then(|| sample_interior(d, cfg.batch_interior, rng));
        let (boundary, face_ids) = sample_boundary(d, cfg.boundary_points_per_face, rng);
        let batch = Batch {
            interior,
            boundary,
            face_ids,
            interior_measure: 1.0,
            boundary_measure: 2.0 * d as f64,
        };
        (batch, normalization, pairing)
    }

    /// Loss and gradient for the tracked primal network, with one batch
    /// redraw if the normalization denominator collapses.
    fn primal_loss_grad(
        &mut self,
        mu: Option<(&ResNetConfig, &ParamVector)>,
        beta: f64,
    ) -> Result<(f64, ParamVector)> {
        for attempt in 0..2 {
            let (batch, norm, pair) = Self::draw_batches(&mut self.rng_primal, &self.spec, &self.cfg);
            let batches = LossBatches {
                batch: &batch,
                normalization: norm.as_ref().map(|a| a.view()),
                pairing: pair.as_ref().map(|a| a.view()),
            };
            let primal = PrimalRef { net: NetRef::Tracked(&self.primal_cfg), exact_bc: self.cfg.exact_bc };
            let res = grad_params(&self.theta_u, |tape| match mu {
                Some((mc, mp)) => {
                    lagrangian(tape, &self.spec, &primal, Some(&NetRef::Frozen(mc, mp)), &batches, beta)
                }
                None => penalty_objective(tape, &self.spec, &primal, &batches, beta),
            });
            match res {
                Err(Error::Degenerate(_)) if attempt == 0 => continue,
                other => return other,
            }
        }
        unreachable!("loop returns on the second attempt")
    }

    fn descent_step(&mut self, mu: Option<(&ResNetConfig, &ParamVector)>, beta: f64) -> Result<()> {
        let (val, grad) = self.primal_loss_grad(mu, beta)?;
        let lr = self.sched_u.at(self.u_steps);
        self.adam_u.step(&mut self.theta_u, grad.as_slice(), lr)?;
        self.u_steps += 1;
        self.last_loss = Some(val);
        if let Some(trace) = &mut self.trace {
            trace.push(hash_params(&self.theta_u));
        }
        Ok(())
    }

    /// Frozen norm `sqrt(|Omega| mean v^2)` for the eigen families, with
    /// one redraw on collapse.
    fn frozen_norm(&mut self, v_field: &dyn ScalarField) -> Result<Option<f64>> {
        if !self.spec.is_eigen() {
            return Ok(None);
        }
        for attempt in 0..2 {
            let zeta = sample_interior(self.spec.dim, self.cfg.batch_interior, &mut self.rng_mult);
            let vals = v_field.eval_many(zeta.view());
            let msq = vals.iter().map(|v| v * v).sum::<f64>() / vals.len() as f64;
            if msq >= 1e-12 {
                return Ok(Some(msq.sqrt()));
            }
            if attempt == 1 {
                return Err(Error::Degenerate(format!(
                    "frozen normalization mean v^2 = {msq} below 1e-12 after redraw"
                )));
            }
        }
        unreachable!()
    }

    fn run_aldl(mut self) -> Result<TrainResult> {
        let cfg = self.cfg.clone();
        let mut beta = cfg.beta0;
        self.record(0, beta)?;
        for k in 0..cfg.epochs {
            if cfg.epochs_multiplier > 0 {
                if !cfg.adam_warm_start {
                    self.adam_mu.reset();
                }
                let v_field = self.primal_field(&self.theta_u);
                let v_norm = self
                    .frozen_norm(v_field.as_ref())
                    .map_err(|e| at_iteration(e, k, "multiplier phase"))?;
                let mu_k = self.theta_mu.clone();
                for i in 0..cfg.epochs_multiplier {
                    let (bpts, _) =
                        sample_boundary(self.spec.dim, cfg.boundary_points_per_face, &mut self.rng_mult);
                    let gamma = 2.0 * self.spec.dim as f64;
                    let (_, grad) = grad_params(&self.theta_mu, |tape| {
                        j_lambda(
                            tape,
                            &self.spec,
                            &NetRef::Tracked(&self.mult_cfg),
                            &NetRef::Frozen(&self.mult_cfg, &mu_k),
                            &NetRef::Field(v_field.as_ref()),
                            bpts.view(),
                            gamma,
                            beta,
                            cfg.j_lambda_sign,
                            v_norm,
                        )
                    })
                    .map_err(|e| at_step(e, k, i, "multiplier"))?;
                    let lr = self.sched_mu.at(self.mu_steps);
                    if lr > 0.0 {
                        self.adam_mu
                            .step(&mut self.theta_mu, grad.as_slice(), lr)
                            .map_err(|e| at_step(e, k, i, "multiplier"))?;
                    }
                    self.mu_steps += 1;
                }
            }
            if !cfg.adam_warm_start {
                self.adam_u.reset();
            }
            for i in 0..cfg.epochs_primal {
                let mu = self.theta_mu.clone();
                self.descent_step(Some((&self.mult_cfg.clone(), &mu)), beta)
                    .map_err(|e| at_step(e, k, i, "primal"))?;
            }
            self.record(k + 1, beta)?;
            beta *= cfg.alpha;
        }
        Ok(self.finish(beta))
    }

    fn run_pmdl(mut self) -> Result<TrainResult> {
        let cfg = self.cfg.clone();
        let beta = cfg.beta0;
        self.record(0, beta)?;
        for step in 0..cfg.epochs {
            self.descent_step(None, beta)
                .map_err(|e| at_step(e, 0, step, "penalty"))?;
            if (step + 1) % cfg.eval_every == 0 {
                self.record(step + 1, beta)?;
            }
        }
        if cfg.epochs % cfg.eval_every != 0 {
            self.record(cfg.epochs, beta)?;
        }
        Ok(self.finish(beta))
    }

    fn run_sgda(mut self) -> Result<TrainResult> {
        let cfg = self.cfg.clone();
        let beta = cfg.beta0;
        // match the alternating method's total gradient-step budget
        let iterations =
            cfg.epochs * (cfg.epochs_primal + cfg.epochs_multiplier) / (1 + cfg.sgda_ascent_ratio);
        self.record(0, beta)?;
        for it in 0..iterations {
            for _ in 0..cfg.sgda_ascent_ratio {
                let (batch, norm, pair) =
                    Self::draw_batches(&mut self.rng_mult, &self.spec, &self.cfg);
                let batches = LossBatches {
                    batch: &batch,
                    normalization: norm.as_ref().map(|a| a.view()),
                    pairing: pair.as_ref().map(|a| a.view()),
                };
                let primal =
                    PrimalRef { net: NetRef::Frozen(&self.primal_cfg, &self.theta_u), exact_bc: cfg.exact_bc };
                let (_, grad) = grad_params(&self.theta_mu, |tape| {
                    lagrangian(tape, &self.spec, &primal, Some(&NetRef::Tracked(&self.mult_cfg)), &batches, beta)
                })
                .map_err(|e| at_step(e, 0, it, "ascent"))?;
                let lr = self.sched_mu.at(self.mu_steps);
                if lr > 0.0 {
                    // ascent on the saddle objective: step against -grad
                    let neg: Vec<f64> = grad.iter().map(|g| -g).collect();
                    self.adam_mu
                        .step(&mut self.theta_mu, &neg, lr)
                        .map_err(|e| at_step(e, 0, it, "ascent"))?;
                }
                self.mu_steps += 1;
            }
            let mu = self.theta_mu.clone();
            self.descent_step(Some((&self.mult_cfg.clone(), &mu)), beta)
                .map_err(|e| at_step(e, 0, it, "descent"))?;
            if (it + 1) % cfg.eval_every == 0 {
                self.record(it + 1, beta)?;
            }
        }
        if iterations % cfg.eval_every != 0 {
            self.record(iterations, beta)?;
        }
        Ok(self.finish(beta))
    }

    fn finish(self, beta: f64) -> TrainResult {
        TrainResult {
            primal: self.theta_u,
            multiplier: self.theta_mu,
            reports: self.reports,
            final_beta: beta,
            wall_s: self.start.elapsed().as_secs_f64(),
            primal_steps: self.u_steps,
            multiplier_steps: self.mu_steps,
            param_trace: self.trace,
        }
    }
}

/// Evaluation reference for a problem: the exact solution where one
/// exists, the finite-difference ground state otherwise.
pub fn resolve_reference(spec: &ProblemSpec, grid: &Grid, gp_n: usize) -> Result<GridReference> {
    match (&spec.exact_solution, spec.family) {
        (Some(exact), _) => Ok(GridReference::from_field(exact.as_ref(), grid, spec.exact_eigenvalue)),
        (None, Family::NonlinearEigen) => {
            let sol = fd_gp_ground_state(spec, gp_n)?;
            let field = OracleField(&sol);
            Ok(GridReference::from_field(&field, grid, sol.rho))
        }
        (None, _) => Err(Error::Config(format!(
            "problem {} has no exact solution and no oracle hook",
            spec.name
        ))),
    }
}

fn at_iteration(e: Error, k: u64, phase: &str) -> Error {
    augment(e, format!("outer iteration {k}, {phase}"))
}

fn at_step(e: Error, k: u64, i: u64, phase: &str) -> Error {
    augment(e, format!("outer iteration {k}, {phase} step {i}"))
}

fn augment(e: Error, ctx: String) -> Error {
    match e {
        Error::Numeric(m) => Error::Numeric(format!("{ctx}: {m}")),
        Error::Degenerate(m) => Error::Degenerate(format!("{ctx}: {m}")),
        other => other,
    }
}

/// FNV-1a over the raw parameter bits (build-stable identity hash).
pub fn hash_params(p: &ParamVector) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for &v in p.iter() {
        for b in v.to_le_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_cfg(problem: &str, method: Method) -> TrainConfig {
        let mut cfg = TrainConfig::defaults(problem).unwrap();
        cfg.method = method;
        cfg.seed = 3;
        cfg.epochs = 2;
        cfg.epochs_primal = 3;
        cfg.epochs_multiplier = 3;
        cfg.batch_interior = 16;
        cfg.boundary_points_per_face = 4;
        cfg.primal_width = 6;
        cfg.primal_depth = 2;
        cfg.multiplier_width = 5;
        cfg.multiplier_depth = 2;
        cfg.grid_h = 0.25;
        cfg.eval_every = 2;
        cfg.gp_reference_n = 16;
        cfg
    }

    #[test]
    fn zero_epochs_returns_initialized_networks() {
        let mut cfg = tiny_cfg("poisson2d", Method::Aldl);
        cfg.epochs = 0;
        let res = run(&cfg).unwrap();
        assert_eq!(res.reports.len(), 1);
        assert_eq!(res.primal_steps, 0);
        let primal_cfg = ResNetConfig::new(2, 6, 2).unwrap();
        let want = init_params_from_rng(&primal_cfg, &mut stream_rng(3, STREAM_INIT_PRIMAL));
        assert_eq!(res.primal, want);
        assert_eq!(res.final_beta, cfg.beta0);
    }

    #[test]
    fn beta_growth_is_exactly_geometric() {
        let mut cfg = tiny_cfg("poisson2d", Method::Aldl);
        cfg.alpha = 2.0;
        cfg.epochs = 3;
        let res = run(&cfg).unwrap();
        assert_eq!(res.final_beta, cfg.beta0 * 8.0);
        let betas: Vec<f64> = res.reports.iter().map(|r| r.beta).collect();
        assert_eq!(betas, vec![100.0, 100.0, 200.0, 400.0]);
    }

    #[test]
    fn budget_accounting_matches_epoch_products() {
        let cfg = tiny_cfg("poisson2d", Method::Aldl);
        let res = run(&cfg).unwrap();
        assert_eq!(res.primal_steps, cfg.epochs * cfg.epochs_primal);
        assert_eq!(res.multiplier_steps, cfg.epochs * cfg.epochs_multiplier);
        assert_eq!(res.reports.len() as u64, cfg.epochs + 1);
    }

    #[test]
    fn runs_are_deterministic() {
        for problem in ["poisson2d", "eigen2d", "gp2d"] {
            let cfg = tiny_cfg(problem, Method::Aldl);
            let a = run(&cfg).unwrap();
            let b = run(&cfg).unwrap();
            assert_eq!(a.primal, b.primal, "{problem}");
            assert_eq!(a.multiplier, b.multiplier);
            let ea: Vec<f64> = a.reports.iter().map(|r| r.err_abs_in).collect();
            let eb: Vec<f64> = b.reports.iter().map(|r| r.err_abs_in).collect();
            assert_eq!(ea, eb);
        }
    }

    #[test]
    fn aldl_with_disabled_multiplier_phase_matches_pmdl_bitwise() {
        let mut aldl = tiny_cfg("poisson2d", Method::Aldl);
        aldl.epochs = 5;
        aldl.epochs_primal = 10;
        aldl.epochs_multiplier = 0;
        aldl.multiplier_init = MultiplierInit::Zero;
        aldl.alpha = 1.0;
        aldl.trace_params = true;
        let mut pmdl = aldl.clone();
        pmdl.method = Method::Pmdl;
        pmdl.epochs = 50;
        pmdl.eval_every = 10;
        let a = run(&aldl).unwrap();
        let p = run(&pmdl).unwrap();
        assert_eq!(a.primal, p.primal);
        assert_eq!(a.param_trace.unwrap(), p.param_trace.unwrap());
    }

    #[test]
    fn sgda_with_zero_ascent_rate_matches_pmdl_stepwise() {
        let mut sgda = tiny_cfg("poisson2d", Method::Sgda);
        sgda.epochs = 4;
        sgda.epochs_primal = 10;
        sgda.epochs_multiplier = 10;
        sgda.multiplier_init = MultiplierInit::Zero;
        sgda.lr_base_multiplier = 0.0;
        sgda.trace_params = true;
        // 4 * 20 / 2 = 40 descent iterations
        let mut pmdl = sgda.clone();
        pmdl.method = Method::Pmdl;
        pmdl.epochs = 40;
        pmdl.eval_every = 10;
        let s = run(&sgda).unwrap();
        let p = run(&pmdl).unwrap();
        assert_eq!(s.primal, p.primal);
        assert_eq!(s.param_trace.unwrap(), p.param_trace.unwrap());
        assert_eq!(s.primal_steps, 40);
        assert_eq!(s.multiplier_steps, 40);
    }

    #[test]
    fn all_methods_run_on_all_families() {
        for problem in ["poisson2d", "eigen2d", "gp2d"] {
            for method in [Method::Aldl, Method::Pmdl, Method::Sgda] {
                let mut cfg = tiny_cfg(problem, method);
                if method == Method::Pmdl {
                    cfg.epochs = 6;
                }
                let res = run(&cfg).unwrap_or_else(|e| panic!("{problem}/{method}: {e}"));
                assert!(res.reports.iter().all(|r| r.err_abs_in.is_finite()));
                if cfg.spec().unwrap().is_eigen() {
                    assert!(res.reports.iter().all(|r| r.rho_rel_err.is_some()));
                    assert!(res.reports.iter().all(|r| r.err_rel_in.is_none()));
                } else {
                    assert!(res.reports.iter().all(|r| r.err_rel_in.is_some()));
                }
            }
        }
    }

    #[test]
    fn exact_bc_training_runs_on_gp() {
        let mut cfg = tiny_cfg("gp2d", Method::Pmdl);
        cfg.exact_bc = true;
        cfg.epochs = 5;
        let res = run(&cfg).unwrap();
        // the composed field vanishes on the boundary lattice by construction
        assert!(res.reports.iter().all(|r| r.err_abs_bd < 1e-12));
    }
}

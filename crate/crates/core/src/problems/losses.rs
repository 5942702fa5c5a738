//! Tape builders for the augmented Lagrangian losses, the penalty
//! objective, and the multiplier least-squares objective.
//!
//! Every builder accepts each network as tracked (differentiated), frozen
//! (parameters held fixed), or an arbitrary scalar field (for oracle
//! checks). Monte Carlo means are taken in batch order, so two evaluations
//! of the same batch are bit-identical.

use ndarray::ArrayView2;

use crate::diffengine::{Tape, Var};
use crate::error::{Error, Result};
use crate::field::{cutoff, cutoff_grad, ScalarField};
use crate::network::{kernels, ParamVector, ResNetConfig};
use crate::sampling::Batch;

use super::{Family, ProblemSpec};

/// Collapse threshold for normalization denominators (`mean v^2`).
pub(crate) const DEGENERATE_EPS: f64 = 1e-12;

/// How a network enters a loss.
pub enum NetRef<'a> {
    /// The tape's tracked parameter vector, interpreted with this config.
    Tracked(&'a ResNetConfig),
    /// A fixed network: enters the loss as constants.
    Frozen(&'a ResNetConfig, &'a ParamVector),
    /// Any scalar field (reference solutions, hand-built test functions).
    Field(&'a dyn ScalarField),
}

/// The primal approximation, optionally composed with the boundary cutoff
/// `l(x) = prod x_i (1-x_i)` so the Dirichlet condition holds exactly.
pub struct PrimalRef<'a> {
    pub net: NetRef<'a>,
    pub exact_bc: bool,
}

impl<'a> PrimalRef<'a> {
    pub fn plain(net: NetRef<'a>) -> Self {
        PrimalRef { net, exact_bc: false }
    }

    pub fn with_exact_bc(net: NetRef<'a>) -> Self {
        PrimalRef { net, exact_bc: true }
    }
}

/// Sign convention of the multiplier target in [`j_lambda`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MultiplierSign {
    /// `mu - beta (Bv - g)`: the gradient-ascent update. Default.
    Minus,
    /// `mu + beta (Bv - g)`: kept for ablation.
    Plus,
}

fn values_on_tape(tape: &mut Tape, net: &NetRef<'_>, pts: ArrayView2<'_, f64>) -> Result<Vec<Var>> {
    match net {
        NetRef::Tracked(cfg) => {
            let out = tape.net_eval(cfg, pts, false)?;
            Ok((0..out.len()).map(|i| out.value(i)).collect())
        }
        NetRef::Frozen(cfg, params) => {
            cfg.check_params(params.as_slice())?;
            let vals = kernels::forward_values(cfg, params.as_slice(), pts);
            Ok(vals.iter().map(|&v| tape.constant(v)).collect())
        }
        NetRef::Field(f) => {
            let vals = f.eval_many(pts);
            Ok(vals.iter().map(|&v| tape.constant(v)).collect())
        }
    }
}

/// Values and input gradients; gradients returned flat as `grads[j*b + i]`.
fn values_grads_on_tape(
    tape: &mut Tape,
    net: &NetRef<'_>,
    pts: ArrayView2<'_, f64>,
) -> Result<(Vec<Var>, Vec<Var>)> {
    let d = pts.ncols();
    let b = pts.nrows();
    match net {
        NetRef::Tracked(cfg) => {
            let out = tape.net_eval(cfg, pts, true)?;
            let vals = (0..b).map(|i| out.value(i)).collect();
            let mut grads = Vec::with_capacity(d * b);
            for j in 0..d {
                for i in 0..b {
                    grads.push(out.input_grad(i, j));
                }
            }
            Ok((vals, grads))
        }
        NetRef::Frozen(cfg, params) => {
            cfg.check_params(params.as_slice())?;
            let (vals, g) = kernels::forward_values_grads(cfg, params.as_slice(), pts);
            let val_vars = vals.iter().map(|&v| tape.constant(v)).collect();
            let mut grads = Vec::with_capacity(d * b);
            for j in 0..d {
                for i in 0..b {
                    grads.push(tape.constant(g[[i, j]]));
                }
            }
            Ok((val_vars, grads))
        }
        NetRef::Field(f) => {
            let (vals, g) = f.eval_grad_many(pts);
            let val_vars = vals.iter().map(|&v| tape.constant(v)).collect();
            let mut grads = Vec::with_capacity(d * b);
            for j in 0..d {
                for i in 0..b {
                    grads.push(tape.constant(g[[i, j]]));
                }
            }
            Ok((val_vars, grads))
        }
    }
}

/// Plain values of a non-tracked network (used for frozen targets).
fn frozen_values(net: &NetRef<'_>, pts: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
    match net {
        NetRef::Tracked(_) => Err(Error::Config(
            "this argument must be a frozen network or field, not the tracked one".into(),
        )),
        NetRef::Frozen(cfg, params) => {
            cfg.check_params(params.as_slice())?;
            Ok(kernels::forward_values(cfg, params.as_slice(), pts).to_vec())
        }
        NetRef::Field(f) => Ok(f.eval_many(pts).to_vec()),
    }
}

fn primal_values(tape: &mut Tape, v: &PrimalRef<'_>, pts: ArrayView2<'_, f64>) -> Result<Vec<Var>> {
    let raw = values_on_tape(tape, &v.net, pts)?;
    if !v.exact_bc {
        return Ok(raw);
    }
    Ok(raw
        .into_iter()
        .enumerate()
        .map(|(i, psi)| {
            let l = cutoff(pts.row(i).as_slice().unwrap());
            tape.scale(psi, l)
        })
        .collect())
}

fn primal_values_grads(
    tape: &mut Tape,
    v: &PrimalRef<'_>,
    pts: ArrayView2<'_, f64>,
) -> Result<(Vec<Var>, Vec<Var>)> {
    let (raw_vals, raw_grads) = values_grads_on_tape(tape, &v.net, pts)?;
    if !v.exact_bc {
        return Ok((raw_vals, raw_grads));
    }
    let d = pts.ncols();
    let b = pts.nrows();
    let mut ls = Vec::with_capacity(b);
    let mut lgs = Vec::with_capacity(b);
    let mut vals = Vec::with_capacity(b);
    for i in 0..b {
        let x = pts.row(i);
        let x = x.as_slice().unwrap();
        let mut lg = [0.0; 3];
        cutoff_grad(x, &mut lg[..d]);
        ls.push(cutoff(x));
        lgs.push(lg);
        vals.push(tape.scale(raw_vals[i], ls[i]));
    }
    let mut grads = Vec::with_capacity(d * b);
    for j in 0..d {
        for i in 0..b {
            // d(l psi)/dx_j = (dl/dx_j) psi + l (dpsi/dx_j)
            let t1 = tape.scale(raw_vals[i], lgs[i][j]);
            let t2 = tape.scale(raw_grads[j * b + i], ls[i]);
            grads.push(tape.add(t1, t2));
        }
    }
    Ok((vals, grads))
}

/// `grad v . A(x) grad v` on the tape for one sample.
fn diffusion_quad_form(
    tape: &mut Tape,
    spec: &ProblemSpec,
    x: &[f64],
    grads: &[Var],
    b: usize,
    i: usize,
) -> Var {
    let d = x.len();
    match &spec.diffusion_matrix {
        None => {
            let a = (spec.diffusion)(x);
            let mut acc: Option<Var> = None;
            for j in 0..d {
                let g2 = tape.sq(grads[j * b + i]);
                acc = Some(match acc {
                    None => g2,
                    Some(s) => tape.add(s, g2),
                });
            }
            tape.scale(acc.expect("d >= 1"), a)
        }
        Some(m) => {
            let a = m(x);
            let mut acc: Option<Var> = None;
            for r in 0..d {
                for c in 0..d {
                    if a[r][c] == 0.0 {
                        continue;
                    }
                    let prod = tape.mul(grads[r * b + i], grads[c * b + i]);
                    let term = tape.scale(prod, a[r][c]);
                    acc = Some(match acc {
                        None => term,
                        Some(s) => tape.add(s, term),
                    });
                }
            }
            match acc {
                Some(s) => s,
                None => tape.constant(0.0),
            }
        }
    }
}

fn check_coef_finite(name: &str, value: f64, x: &[f64]) -> Result<()> {
    if !value.is_finite() {
        return Err(Error::Numeric(format!("coefficient {name} evaluated to {value} at {x:?}")));
    }
    Ok(())
}

/// Augmented Lagrangian estimator for the elliptic family:
/// `|Omega| mean_xi[ A |grad v|^2 / 2 + c v^2 / 2 - f v ]
///  - |Gamma| mean_eta[ mu (v - g) ] + (beta/2) |Gamma| mean_eta[(v - g)^2]`.
pub fn lagrangian_elliptic(
    tape: &mut Tape,
    spec: &ProblemSpec,
    v: &PrimalRef<'_>,
    mu: Option<&NetRef<'_>>,
    batch: &Batch,
    beta: f64,
) -> Result<Var> {
    if batch.interior.nrows() == 0 || batch.boundary.nrows() == 0 {
        return Err(Error::Config("elliptic loss needs nonempty interior and boundary batches".into()));
    }
    let b = batch.interior.nrows();
    let (vals, grads) = primal_values_grads(tape, v, batch.interior.view())?;
    let mut interior_terms = Vec::with_capacity(b);
    for i in 0..b {
        let x = batch.interior.row(i);
        let x = x.as_slice().unwrap();
        let c = (spec.reaction)(x);
        let f = (spec.source)(x);
        check_coef_finite("diffusion", (spec.diffusion)(x), x)?;
        check_coef_finite("reaction", c, x)?;
        check_coef_finite("source", f, x)?;
        let quad = diffusion_quad_form(tape, spec, x, &grads, b, i);
        let half_quad = tape.scale(quad, 0.5);
        let v2 = tape.sq(vals[i]);
        let cv2 = tape.scale(v2, 0.5 * c);
        let fv = tape.scale(vals[i], f);
        let t = tape.add(half_quad, cv2);
        interior_terms.push(tape.sub(t, fv));
    }
    let interior_mean = tape.mean(&interior_terms);
    let interior = tape.scale(interior_mean, batch.interior_measure);

    let bv = primal_values(tape, v, batch.boundary.view())?;
    let mu_vals = boundary_multiplier(tape, mu, batch.boundary.view())?;
    let nb = batch.boundary.nrows();
    let mut mu_terms = Vec::with_capacity(nb);
    let mut pen_terms = Vec::with_capacity(nb);
    for i in 0..nb {
        let x = batch.boundary.row(i);
        let g = (spec.boundary)(x.as_slice().unwrap());
        check_coef_finite("boundary", g, x.as_slice().unwrap())?;
        let r = tape.add_const(bv[i], -g);
        mu_terms.push(tape.mul(mu_vals[i], r));
        pen_terms.push(tape.sq(r));
    }
    let mu_mean = tape.mean(&mu_terms);
    let mu_term = tape.scale(mu_mean, batch.boundary_measure);
    let pen_mean = tape.mean(&pen_terms);
    let pen_term = tape.scale(pen_mean, 0.5 * beta * batch.boundary_measure);

    let partial = tape.sub(interior, mu_term);
    Ok(tape.add(partial, pen_term))
}

fn boundary_multiplier(
    tape: &mut Tape,
    mu: Option<&NetRef<'_>>,
    pts: ArrayView2<'_, f64>,
) -> Result<Vec<Var>> {
    match mu {
        Some(net) => values_on_tape(tape, net, pts),
        None => Ok((0..pts.nrows()).map(|_| tape.constant(0.0)).collect()),
    }
}

/// Rayleigh-quotient estimator for the linear eigenvalue family:
/// `mean_xi[p |grad v|^2 + q v^2] / mean_zeta[v^2]
///  - |Gamma| mean_eta[mu v] / sqrt(|Omega| mean_zeta[v^2])
///  + beta |Gamma| mean_eta[v^2] / (2 |Omega| mean_zeta[v^2])`.
pub fn lagrangian_linear_eigen(
    tape: &mut Tape,
    spec: &ProblemSpec,
    v: &PrimalRef<'_>,
    mu: Option<&NetRef<'_>>,
    batch: &Batch,
    normalization: ArrayView2<'_, f64>,
    beta: f64,
) -> Result<Var> {
    if batch.interior.nrows() == 0 || batch.boundary.nrows() == 0 || normalization.nrows() == 0 {
        return Err(Error::Config("eigen loss needs nonempty xi, zeta, and boundary batches".into()));
    }
    let b = batch.interior.nrows();
    let (vals, grads) = primal_values_grads(tape, v, batch.interior.view())?;
    let mut num_terms = Vec::with_capacity(b);
    for i in 0..b {
        let x = batch.interior.row(i);
        let x = x.as_slice().unwrap();
        let q = (spec.reaction)(x);
        check_coef_finite("diffusion", (spec.diffusion)(x), x)?;
        check_coef_finite("reaction", q, x)?;
        let quad = diffusion_quad_form(tape, spec, x, &grads, b, i);
        let v2 = tape.sq(vals[i]);
        let qv2 = tape.scale(v2, q);
        num_terms.push(tape.add(quad, qv2));
    }
    let num = tape.mean(&num_terms);

    let zvals = primal_values(tape, v, normalization)?;
    let zsq: Vec<Var> = zvals.iter().map(|&z| tape.sq(z)).collect();
    let den = tape.mean(&zsq);
    if tape.value(den) < DEGENERATE_EPS {
        return Err(Error::Degenerate(format!(
            "normalization mean v^2 = {} below {DEGENERATE_EPS}",
            tape.value(den)
        )));
    }
    let rayleigh = tape.div(num, den);

    let bvals = primal_values(tape, v, batch.boundary.view())?;
    let mu_vals = boundary_multiplier(tape, mu, batch.boundary.view())?;
    let nb = batch.boundary.nrows();
    let mut mu_terms = Vec::with_capacity(nb);
    let mut pen_terms = Vec::with_capacity(nb);
    for i in 0..nb {
        mu_terms.push(tape.mul(mu_vals[i], bvals[i]));
        pen_terms.push(tape.sq(bvals[i]));
    }
    let mu_mean = tape.mean(&mu_terms);
    let mu_num = tape.scale(mu_mean, batch.boundary_measure);
    let den_omega = tape.scale(den, batch.interior_measure);
    let root = tape.sqrt(den_omega);
    let mu_term = tape.div(mu_num, root);

    let pen_mean = tape.mean(&pen_terms);
    let pen_num = tape.scale(pen_mean, beta * batch.boundary_measure);
    let pen_den = tape.scale(den, 2.0 * batch.interior_measure);
    let pen_term = tape.div(pen_num, pen_den);

    let partial = tape.sub(rayleigh, mu_term);
    Ok(tape.add(partial, pen_term))
}

/// Estimator for the Gross-Pitaevskii family. Batches `xi1` (gradients),
/// `xi2` (normalization), and `xi3` (paired with `xi2` for the quartic
/// denominator) must be independent; `xi2` and `xi3` share a length.
pub fn lagrangian_nonlinear_eigen(
    tape: &mut Tape,
    spec: &ProblemSpec,
    v: &PrimalRef<'_>,
    mu: Option<&NetRef<'_>>,
    batch: &Batch,
    xi2: ArrayView2<'_, f64>,
    xi3: ArrayView2<'_, f64>,
    beta: f64,
) -> Result<Var> {
    if batch.interior.nrows() == 0 || batch.boundary.nrows() == 0 || xi2.nrows() == 0 {
        return Err(Error::Config("gp loss needs nonempty xi1, xi2, xi3, and boundary batches".into()));
    }
    if xi2.nrows() != xi3.nrows() {
        return Err(Error::Dimension(format!(
            "paired batches must have equal sizes, got {} and {}",
            xi2.nrows(),
            xi3.nrows()
        )));
    }
    let b = batch.interior.nrows();
    let (vals, grads) = primal_values_grads(tape, v, batch.interior.view())?;
    let mut num_terms = Vec::with_capacity(b);
    let mut quartic_terms = Vec::with_capacity(b);
    for i in 0..b {
        let x = batch.interior.row(i);
        let x = x.as_slice().unwrap();
        let pot = (spec.reaction)(x);
        check_coef_finite("diffusion", (spec.diffusion)(x), x)?;
        check_coef_finite("potential", pot, x)?;
        let quad = diffusion_quad_form(tape, spec, x, &grads, b, i);
        let v2 = tape.sq(vals[i]);
        let vv2 = tape.scale(v2, pot);
        num_terms.push(tape.add(quad, vv2));
        quartic_terms.push(tape.sq(v2));
    }
    let num = tape.mean(&num_terms);
    let quartic_num = tape.mean(&quartic_terms);

    let z2 = primal_values(tape, v, xi2)?;
    let z2sq: Vec<Var> = z2.iter().map(|&z| tape.sq(z)).collect();
    let den2 = tape.mean(&z2sq);
    if tape.value(den2) < DEGENERATE_EPS {
        return Err(Error::Degenerate(format!(
            "normalization mean v^2 = {} below {DEGENERATE_EPS}",
            tape.value(den2)
        )));
    }

    let z3 = primal_values(tape, v, xi3)?;
    let mut pair_terms = Vec::with_capacity(z3.len());
    for i in 0..z3.len() {
        let a = z2sq[i];
        let b3 = tape.sq(z3[i]);
        pair_terms.push(tape.mul(a, b3));
    }
    let den_pair = tape.mean(&pair_terms);

    let t1 = tape.div(num, den2);
    let pair_scaled = tape.scale(den_pair, batch.interior_measure);
    let t2 = tape.div(quartic_num, pair_scaled);

    let bvals = primal_values(tape, v, batch.boundary.view())?;
    let mu_vals = boundary_multiplier(tape, mu, batch.boundary.view())?;
    let nb = batch.boundary.nrows();
    let mut mu_terms = Vec::with_capacity(nb);
    let mut pen_terms = Vec::with_capacity(nb);
    for i in 0..nb {
        mu_terms.push(tape.mul(mu_vals[i], bvals[i]));
        pen_terms.push(tape.sq(bvals[i]));
    }
    let mu_mean = tape.mean(&mu_terms);
    let mu_num = tape.scale(mu_mean, batch.boundary_measure);
    let den_omega = tape.scale(den2, batch.interior_measure);
    let root = tape.sqrt(den_omega);
    let t3 = tape.div(mu_num, root);

    let pen_mean = tape.mean(&pen_terms);
    let pen_num = tape.scale(pen_mean, beta * batch.boundary_measure);
    let pen_den = tape.scale(den2, 2.0 * batch.interior_measure);
    let t4 = tape.div(pen_num, pen_den);

    let s = tape.add(t1, t2);
    let s = tape.sub(s, t3);
    Ok(tape.add(s, t4))
}

/// Extra interior batches a family needs beyond the main one.
pub struct LossBatches<'a> {
    pub batch: &'a Batch,
    /// zeta (linear eigen) or xi2 (nonlinear).
    pub normalization: Option<ArrayView2<'a, f64>>,
    /// xi3 (nonlinear only).
    pub pairing: Option<ArrayView2<'a, f64>>,
}

/// Family dispatch for the augmented Lagrangian.
pub fn lagrangian(
    tape: &mut Tape,
    spec: &ProblemSpec,
    v: &PrimalRef<'_>,
    mu: Option<&NetRef<'_>>,
    batches: &LossBatches<'_>,
    beta: f64,
) -> Result<Var> {
    match spec.family {
        Family::Elliptic => lagrangian_elliptic(tape, spec, v, mu, batches.batch, beta),
        Family::LinearEigen => {
            let zeta = batches
                .normalization
                .ok_or_else(|| Error::Config("linear eigen loss needs a normalization batch".into()))?;
            lagrangian_linear_eigen(tape, spec, v, mu, batches.batch, zeta, beta)
        }
        Family::NonlinearEigen => {
            let xi2 = batches
                .normalization
                .ok_or_else(|| Error::Config("gp loss needs a normalization batch".into()))?;
            let xi3 = batches
                .pairing
                .ok_or_else(|| Error::Config("gp loss needs a pairing batch".into()))?;
            lagrangian_nonlinear_eigen(tape, spec, v, mu, batches.batch, xi2, xi3, beta)
        }
    }
}

/// The penalty objective: the corresponding Lagrangian with the multiplier
/// identically zero. Shares the Lagrangian code path, so the two agree
/// bit-for-bit on identical batches.
pub fn penalty_objective(
    tape: &mut Tape,
    spec: &ProblemSpec,
    v: &PrimalRef<'_>,
    batches: &LossBatches<'_>,
    beta: f64,
) -> Result<Var> {
    lagrangian(tape, spec, v, None, batches, beta)
}

/// Least-squares objective fitting the multiplier network `nu` to the
/// function-space update `mu_k - beta (B v_k - g)` on the boundary:
/// `|Gamma| mean_eta[(nu - target)^2]`. For the eigenvalue families `B v`
/// is the normalized trace `v / |v|`, so callers pass the frozen norm.
#[allow(clippy::too_many_arguments)]
pub fn j_lambda(
    tape: &mut Tape,
    spec: &ProblemSpec,
    nu: &NetRef<'_>,
    mu_frozen: &NetRef<'_>,
    v_frozen: &NetRef<'_>,
    boundary: ArrayView2<'_, f64>,
    boundary_measure: f64,
    beta: f64,
    sign: MultiplierSign,
    v_norm: Option<f64>,
) -> Result<Var> {
    if boundary.nrows() == 0 {
        return Err(Error::Config("multiplier update needs a nonempty boundary batch".into()));
    }
    let norm = match v_norm {
        Some(n) => {
            if !(n > DEGENERATE_EPS) {
                return Err(Error::Degenerate(format!("frozen norm {n} below {DEGENERATE_EPS}")));
            }
            n
        }
        None => 1.0,
    };
    let s = match sign {
        MultiplierSign::Minus => 1.0,
        MultiplierSign::Plus => -1.0,
    };
    let mu_vals = frozen_values(mu_frozen, boundary)?;
    let v_vals = frozen_values(v_frozen, boundary)?;
    let nu_vals = values_on_tape(tape, nu, boundary)?;
    let mut terms = Vec::with_capacity(nu_vals.len());
    for i in 0..nu_vals.len() {
        let x = boundary.row(i);
        let g = (spec.boundary)(x.as_slice().unwrap());
        check_coef_finite("boundary", g, x.as_slice().unwrap())?;
        let target = mu_vals[i] - s * beta * (v_vals[i] / norm - g);
        if !target.is_finite() {
            return Err(Error::Numeric(format!("multiplier target is {target} at sample {i}")));
        }
        let diff = tape.add_const(nu_vals[i], -target);
        terms.push(tape.sq(diff));
    }
    let mean = tape.mean(&terms);
    Ok(tape.scale(mean, boundary_measure))
}

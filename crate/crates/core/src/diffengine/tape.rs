//! Reverse-mode tape over scalars, with fused batched network evaluations.
//!
//! The tape records the cheap scalar skeleton of a loss (means, ratios,
//! square roots). Whole-batch network evaluations enter as single fused
//! records whose outputs (values and, optionally, input gradients) appear as
//! ordinary tape nodes; the reverse sweep collects their adjoints and hands
//! them to the batched backward kernel. One tape differentiates with respect
//! to exactly one tracked parameter vector; everything else is a constant.

use ndarray::ArrayView2;

use crate::error::{Error, Result};
use crate::network::kernels::{self, ForwardTrace};
use crate::network::{ParamVector, ResNetConfig};

/// Handle to a tape node.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(u32);

#[derive(Clone, Copy, Debug)]
enum Op {
    Const,
    Param(u32),
    Add(u32, u32),
    Sub(u32, u32),
    Mul(u32, u32),
    Div(u32, u32),
    Neg(u32),
    Sqrt(u32),
    Sq(u32),
    SqRelu(u32),
    SqReluGrad(u32),
    /// n-ary sum over `aux[start..start+len]`, reduced in that fixed order.
    Sum { start: u32, len: u32 },
    NetOut { rec: u32, out: u32 },
}

struct NetRecord {
    cfg: ResNetConfig,
    trace: ForwardTrace,
    out_adj: Vec<f64>,
}

/// Recording tape for one loss evaluation. Create through [`grad_params`]
/// (or [`Tape::evaluate`] for value-only use); cleared state between loss
/// evaluations is guaranteed because each evaluation builds a fresh tape.
pub struct Tape {
    ops: Vec<Op>,
    vals: Vec<f64>,
    aux: Vec<u32>,
    records: Vec<NetRecord>,
    tracked: Vec<f64>,
}

impl Tape {
    fn new(tracked: &[f64]) -> Self {
        Tape {
            ops: Vec::with_capacity(1 << 12),
            vals: Vec::with_capacity(1 << 12),
            aux: Vec::new(),
            records: Vec::new(),
            tracked: tracked.to_vec(),
        }
    }

    fn push(&mut self, op: Op, val: f64) -> Var {
        let id = self.ops.len() as u32;
        self.ops.push(op);
        self.vals.push(val);
        Var(id)
    }

    pub fn value(&self, v: Var) -> f64 {
        self.vals[v.0 as usize]
    }

    pub fn n_tracked(&self) -> usize {
        self.tracked.len()
    }

    pub fn constant(&mut self, c: f64) -> Var {
        self.push(Op::Const, c)
    }

    /// Scalar node reading tracked parameter `i`.
    pub fn param(&mut self, i: usize) -> Result<Var> {
        if i >= self.tracked.len() {
            return Err(Error::Dimension(format!(
                "parameter index {i} out of range (tracked vector has {})",
                self.tracked.len()
            )));
        }
        Ok(self.push(Op::Param(i as u32), self.tracked[i]))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.push(Op::Add(a.0, b.0), self.value(a) + self.value(b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.push(Op::Sub(a.0, b.0), self.value(a) - self.value(b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.push(Op::Mul(a.0, b.0), self.value(a) * self.value(b))
    }

    pub fn div(&mut self, a: Var, b: Var) -> Var {
        self.push(Op::Div(a.0, b.0), self.value(a) / self.value(b))
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.push(Op::Neg(a.0), -self.value(a))
    }

    pub fn sqrt(&mut self, a: Var) -> Var {
        self.push(Op::Sqrt(a.0), self.value(a).sqrt())
    }

    pub fn sq(&mut self, a: Var) -> Var {
        let v = self.value(a);
        self.push(Op::Sq(a.0), v * v)
    }

    /// sigma(t) = max(t, 0)^2.
    pub fn sq_relu(&mut self, a: Var) -> Var {
        let v = self.value(a).max(0.0);
        self.push(Op::SqRelu(a.0), v * v)
    }

    /// sigma'(t) = 2 max(t, 0), differentiable with sigma''(0) = 0.
    pub fn sq_relu_grad(&mut self, a: Var) -> Var {
        self.push(Op::SqReluGrad(a.0), 2.0 * self.value(a).max(0.0))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let cv = self.constant(c);
        self.mul(a, cv)
    }

    pub fn add_const(&mut self, a: Var, c: f64) -> Var {
        let cv = self.constant(c);
        self.add(a, cv)
    }

    /// Sum in the listed order (deterministic reduction).
    pub fn sum(&mut self, vars: &[Var]) -> Var {
        let start = self.aux.len() as u32;
        self.aux.extend(vars.iter().map(|v| v.0));
        let total: f64 = vars.iter().map(|v| self.value(*v)).sum();
        self.push(Op::Sum { start, len: vars.len() as u32 }, total)
    }

    pub fn mean(&mut self, vars: &[Var]) -> Var {
        let s = self.sum(vars);
        self.scale(s, 1.0 / vars.len() as f64)
    }

    /// Fused batched evaluation of the tracked network at `points`
    /// (`B x d` rows). With `with_input_grad`, the per-sample input
    /// gradients become tape nodes too, and the parameter gradient of any
    /// expression in them is exact.
    pub fn net_eval(
        &mut self,
        cfg: &ResNetConfig,
        points: ArrayView2<'_, f64>,
        with_input_grad: bool,
    ) -> Result<NetOutputs> {
        cfg.check_params(&self.tracked).map_err(|_| {
            Error::Dimension(format!(
                "tracked vector has length {}, network config wants {}",
                self.tracked.len(),
                cfg.param_len()
            ))
        })?;
        if points.ncols() != cfg.input_dim {
            return Err(Error::Dimension(format!(
                "points have dimension {}, network input width is {}",
                points.ncols(),
                cfg.input_dim
            )));
        }
        let dt = if with_input_grad { cfg.input_dim } else { 0 };
        let trace = kernels::forward_trace(cfg, &self.tracked, points, dt);
        let b = trace.b;
        let rec = self.records.len() as u32;
        let n_out = (1 + dt) * b;
        let mut vars = Vec::with_capacity(n_out);
        for k in 0..n_out {
            let val = trace.out[k];
            vars.push(self.push(Op::NetOut { rec, out: k as u32 }, val));
        }
        self.records.push(NetRecord { cfg: cfg.clone(), trace, out_adj: vec![0.0; n_out] });
        Ok(NetOutputs { b, dt, vars })
    }

    fn backward(&mut self, root: Var, grad: &mut [f64]) {
        let mut adj = vec![0.0f64; self.ops.len()];
        adj[root.0 as usize] = 1.0;
        for id in (0..=root.0 as usize).rev() {
            let a = adj[id];
            if a == 0.0 {
                // zero adjoints contribute zero to every input; values on the
                // tape are finite (checked by grad_params) so skipping is exact
                continue;
            }
            match self.ops[id] {
                Op::Const => {}
                Op::Param(i) => grad[i as usize] += a,
                Op::Add(x, y) => {
                    adj[x as usize] += a;
                    adj[y as usize] += a;
                }
                Op::Sub(x, y) => {
                    adj[x as usize] += a;
                    adj[y as usize] -= a;
                }
                Op::Mul(x, y) => {
                    adj[x as usize] += a * self.vals[y as usize];
                    adj[y as usize] += a * self.vals[x as usize];
                }
                Op::Div(x, y) => {
                    let yv = self.vals[y as usize];
                    adj[x as usize] += a / yv;
                    adj[y as usize] -= a * self.vals[x as usize] / (yv * yv);
                }
                Op::Neg(x) => adj[x as usize] -= a,
                Op::Sqrt(x) => adj[x as usize] += a * 0.5 / self.vals[id],
                Op::Sq(x) => adj[x as usize] += a * 2.0 * self.vals[x as usize],
                Op::SqRelu(x) => adj[x as usize] += a * 2.0 * self.vals[x as usize].max(0.0),
                Op::SqReluGrad(x) => {
                    if self.vals[x as usize] > 0.0 {
                        adj[x as usize] += 2.0 * a;
                    }
                }
                Op::Sum { start, len } => {
                    for k in start..start + len {
                        adj[self.aux[k as usize] as usize] += a;
                    }
                }
                Op::NetOut { rec, out } => {
                    self.records[rec as usize].out_adj[out as usize] += a;
                }
            }
        }
        for rec in &self.records {
            kernels::backprop(&rec.cfg, &self.tracked, &rec.trace, &rec.out_adj, grad);
        }
    }
}

/// Outputs of one fused network evaluation.
pub struct NetOutputs {
    b: usize,
    dt: usize,
    vars: Vec<Var>,
}

impl NetOutputs {
    pub fn len(&self) -> usize {
        self.b
    }

    pub fn is_empty(&self) -> bool {
        self.b == 0
    }

    pub fn has_input_grads(&self) -> bool {
        self.dt > 0
    }

    pub fn value(&self, sample: usize) -> Var {
        self.vars[sample]
    }

    /// d(phi)/d(x_axis) at sample `sample`.
    pub fn input_grad(&self, sample: usize, axis: usize) -> Var {
        debug_assert!(axis < self.dt);
        self.vars[(1 + axis) * self.b + sample]
    }
}

/// Differentiate a scalar loss with respect to `params`. The closure builds
/// the loss on a fresh tape whose tracked vector is `params`; returns the
/// loss value and a gradient with the same length and ordering.
pub fn grad_params<F>(params: &ParamVector, build: F) -> Result<(f64, ParamVector)>
where
    F: FnOnce(&mut Tape) -> Result<Var>,
{
    let mut tape = Tape::new(params.as_slice());
    let root = build(&mut tape)?;
    let value = tape.value(root);
    if !value.is_finite() {
        return Err(Error::Numeric(format!("loss evaluated to {value}")));
    }
    let mut grad = vec![0.0; params.len()];
    tape.backward(root, &mut grad);
    if let Some((i, g)) = grad.iter().enumerate().find(|(_, g)| !g.is_finite()) {
        return Err(Error::Numeric(format!("gradient component {i} is {g}")));
    }
    Ok((value, ParamVector::from_vec(grad)))
}

/// Evaluate a tape expression without differentiating (the tracked vector
/// may be empty).
pub fn evaluate<F>(params: &ParamVector, build: F) -> Result<f64>
where
    F: FnOnce(&mut Tape) -> Result<Var>,
{
    let mut tape = Tape::new(params.as_slice());
    let root = build(&mut tape)?;
    Ok(tape.value(root))
}

/// A network whose value and input gradient can be built on a tape at one
/// point, for differentiating those quantities with respect to parameters.
pub trait TapeNet {
    fn input_dim(&self) -> usize;
    fn build(&self, tape: &mut Tape, x: &[f64]) -> Result<TapePoint>;
}

/// Value and input-gradient nodes of a [`TapeNet`] at one point.
pub struct TapePoint {
    pub value: Var,
    pub input_grads: Vec<Var>,
}

/// Parameter gradient of each component of the input gradient: row `j` is
/// `d/d(theta) [ d(phi)/d(x_j) ]`, a `d x n_params` matrix.
pub fn grad_params_of_input_grad(
    net: &dyn TapeNet,
    params: &ParamVector,
    x: &[f64],
) -> Result<ndarray::Array2<f64>> {
    let d = net.input_dim();
    if x.len() != d {
        return Err(Error::Dimension(format!(
            "point has dimension {}, network input width is {d}",
            x.len()
        )));
    }
    let mut rows = ndarray::Array2::zeros((d, params.len()));
    for j in 0..d {
        let (_, g) = grad_params(params, |tape| {
            let point = net.build(tape, x)?;
            Ok(point.input_grads[j])
        })?;
        for (k, &gv) in g.as_slice().iter().enumerate() {
            rows[[j, k]] = gv;
        }
    }
    Ok(rows)
}

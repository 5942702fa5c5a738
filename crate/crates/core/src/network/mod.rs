//! Scalar-output residual network and its flat parameter vector.
//!
//! The function class is
//! `h_0 = V x`, `h_l = h_{l-1} + sigma(W_l h_{l-1} + b_l)`, `phi = a . h_L`
//! with `sigma(t) = max(t, 0)^2`. The same class serves both the primal
//! approximation and the boundary multiplier.

pub mod kernels;

use ndarray::{Array1, Array2};
use rand::distributions::{Distribution, Uniform};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::diffengine::{Dual, TapeNet, TapePoint, Tape};
use crate::error::{Error, Result};
use crate::field::ScalarField;

/// Architecture of one residual network. The activation is fixed.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ResNetConfig {
    pub input_dim: usize,
    pub width: usize,
    pub depth: usize,
}

/// Total trainable parameter count, plus the count excluding the input map
/// (a common reporting convention that leaves out the `V` entries).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ParamCount {
    pub total: usize,
    pub excluding_input_map: usize,
}

impl ResNetConfig {
    pub fn new(input_dim: usize, width: usize, depth: usize) -> Result<Self> {
        if input_dim < 1 || width < 1 || depth < 1 {
            return Err(Error::Config(format!(
                "ResNetConfig requires input_dim, width, depth >= 1 (got {input_dim}, {width}, {depth})"
            )));
        }
        Ok(ResNetConfig { input_dim, width, depth })
    }

    /// Flat length: `N*d + L*(N^2 + N) + N`, and the same with the `N*d`
    /// input-map block excluded.
    pub fn param_count(&self) -> ParamCount {
        let (d, n, l) = (self.input_dim, self.width, self.depth);
        let total = n * d + l * (n * n + n) + n;
        ParamCount { total, excluding_input_map: total - n * d }
    }

    pub fn param_len(&self) -> usize {
        self.param_count().total
    }

    // Flat layout: V row-major at offset 0, then (W_1, b_1), ...,
    // (W_L, b_L), then a.
    pub(crate) fn offset_weight(&self, layer: usize) -> usize {
        let n = self.width;
        n * self.input_dim + layer * (n * n + n)
    }

    pub(crate) fn offset_bias(&self, layer: usize) -> usize {
        self.offset_weight(layer) + self.width * self.width
    }

    pub(crate) fn offset_output(&self) -> usize {
        self.offset_weight(self.depth)
    }

    pub(crate) fn check_params(&self, params: &[f64]) -> Result<()> {
        if params.len() != self.param_len() {
            return Err(Error::Dimension(format!(
                "parameter vector has length {}, config wants {}",
                params.len(),
                self.param_len()
            )));
        }
        Ok(())
    }

    fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim {
            return Err(Error::Dimension(format!(
                "point has dimension {}, network input width is {}",
                x.len(),
                self.input_dim
            )));
        }
        Ok(())
    }

    /// Structured view of a flat vector. Round-trips with [`ResNetConfig::flatten`].
    pub fn unflatten(&self, params: &ParamVector) -> Result<ParamStructure> {
        self.check_params(params.as_slice())?;
        let (d, n, l) = (self.input_dim, self.width, self.depth);
        let p = params.as_slice();
        let input_map =
            Array2::from_shape_vec((n, d), p[..n * d].to_vec()).expect("shape checked");
        let mut layers = Vec::with_capacity(l);
        for layer in 0..l {
            let wo = self.offset_weight(layer);
            let bo = self.offset_bias(layer);
            let w = Array2::from_shape_vec((n, n), p[wo..wo + n * n].to_vec()).unwrap();
            let b = Array1::from_vec(p[bo..bo + n].to_vec());
            layers.push((w, b));
        }
        let ao = self.offset_output();
        let output = Array1::from_vec(p[ao..ao + n].to_vec());
        Ok(ParamStructure { input_map, layers, output })
    }

    pub fn flatten(&self, s: &ParamStructure) -> ParamVector {
        let mut out = Vec::with_capacity(self.param_len());
        out.extend(s.input_map.iter());
        for (w, b) in &s.layers {
            out.extend(w.iter());
            out.extend(b.iter());
        }
        out.extend(s.output.iter());
        ParamVector::from_vec(out)
    }
}

/// All trainable parameters of one network, flat, in the documented order.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamVector(Vec<f64>);

impl ParamVector {
    pub fn zeros(len: usize) -> Self {
        ParamVector(vec![0.0; len])
    }

    pub fn from_vec(v: Vec<f64>) -> Self {
        ParamVector(v)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.0.iter()
    }
}

impl std::ops::Index<usize> for ParamVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl std::ops::IndexMut<usize> for ParamVector {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.0[i]
    }
}

/// Structured (per-block) view of a [`ParamVector`].
#[derive(Clone, Debug)]
pub struct ParamStructure {
    pub input_map: Array2<f64>,
    pub layers: Vec<(Array2<f64>, Array1<f64>)>,
    pub output: Array1<f64>,
}

/// Draw every affine block uniformly from `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`
/// where `fan_in` is that block's input width (`d` for the input map, `N`
/// for hidden weights, biases, and the output weights).
pub fn init_params_from_rng(cfg: &ResNetConfig, rng: &mut impl Rng) -> ParamVector {
    let (d, n, l) = (cfg.input_dim, cfg.width, cfg.depth);
    let mut p = Vec::with_capacity(cfg.param_len());
    let input_bound = 1.0 / (d as f64).sqrt();
    let hidden_bound = 1.0 / (n as f64).sqrt();
    let input_dist = Uniform::new_inclusive(-input_bound, input_bound);
    let hidden_dist = Uniform::new_inclusive(-hidden_bound, hidden_bound);
    for _ in 0..n * d {
        p.push(input_dist.sample(rng));
    }
    for _ in 0..l {
        for _ in 0..n * n + n {
            p.push(hidden_dist.sample(rng));
        }
    }
    for _ in 0..n {
        p.push(hidden_dist.sample(rng));
    }
    ParamVector::from_vec(p)
}

/// Deterministic initialization from a 64-bit seed.
pub fn init_params(cfg: &ResNetConfig, seed: u64) -> ParamVector {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    init_params_from_rng(cfg, &mut rng)
}

/// Evaluate the network at one point.
pub fn forward(cfg: &ResNetConfig, params: &ParamVector, x: &[f64]) -> Result<f64> {
    cfg.check_params(params.as_slice())?;
    cfg.check_point(x)?;
    let (d, n, l) = (cfg.input_dim, cfg.width, cfg.depth);
    let p = params.as_slice();
    let mut h = vec![0.0; n];
    for r in 0..n {
        let mut acc = 0.0;
        for c in 0..d {
            acc += p[r * d + c] * x[c];
        }
        h[r] = acc;
    }
    let mut z = vec![0.0; n];
    for layer in 0..l {
        let wo = cfg.offset_weight(layer);
        let bo = cfg.offset_bias(layer);
        for r in 0..n {
            let mut acc = p[bo + r];
            let row = &p[wo + r * n..wo + (r + 1) * n];
            for c in 0..n {
                acc += row[c] * h[c];
            }
            z[r] = acc;
        }
        for r in 0..n {
            let t = z[r];
            if t > 0.0 {
                h[r] += t * t;
            }
        }
    }
    let ao = cfg.offset_output();
    Ok((0..n).map(|r| p[ao + r] * h[r]).sum())
}

/// Evaluate the network on dual inputs, propagating input tangents.
pub fn forward_dual(cfg: &ResNetConfig, params: &ParamVector, x: &[Dual]) -> Result<Dual> {
    cfg.check_params(params.as_slice())?;
    if x.len() != cfg.input_dim {
        return Err(Error::Dimension(format!(
            "point has dimension {}, network input width is {}",
            x.len(),
            cfg.input_dim
        )));
    }
    let (d, n, l) = (cfg.input_dim, cfg.width, cfg.depth);
    let p = params.as_slice();
    let mut h: Vec<Dual> = (0..n)
        .map(|r| {
            let mut acc = Dual::constant(0.0);
            for c in 0..d {
                acc = acc + x[c].scale(p[r * d + c]);
            }
            acc
        })
        .collect();
    for layer in 0..l {
        let wo = cfg.offset_weight(layer);
        let bo = cfg.offset_bias(layer);
        let z: Vec<Dual> = (0..n)
            .map(|r| {
                let mut acc = Dual::constant(p[bo + r]);
                let row = &p[wo + r * n..wo + (r + 1) * n];
                for c in 0..n {
                    acc = acc + h[c].scale(row[c]);
                }
                acc
            })
            .collect();
        for r in 0..n {
            h[r] = h[r] + z[r].sq_relu();
        }
    }
    let ao = cfg.offset_output();
    let mut out = Dual::constant(0.0);
    for r in 0..n {
        out = out + h[r].scale(p[ao + r]);
    }
    Ok(out)
}

/// Network bound to a parameter vector, usable as a [`ScalarField`].
#[derive(Clone)]
pub struct NetField {
    pub cfg: ResNetConfig,
    pub params: ParamVector,
}

impl NetField {
    pub fn new(cfg: ResNetConfig, params: ParamVector) -> Result<Self> {
        cfg.check_params(params.as_slice())?;
        Ok(NetField { cfg, params })
    }
}

impl ScalarField for NetField {
    fn dim(&self) -> usize {
        self.cfg.input_dim
    }

    fn eval(&self, x: &[f64]) -> f64 {
        forward(&self.cfg, &self.params, x).expect("dimension checked at construction")
    }

    fn eval_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        let d = self.cfg.input_dim;
        let xs: Vec<Dual> = (0..d).map(|a| Dual::variable(x[a], a, d)).collect();
        let out = forward_dual(&self.cfg, &self.params, &xs).expect("dimension checked");
        grad[..d].copy_from_slice(out.tangent());
        out.value()
    }

    fn eval_many(&self, pts: ndarray::ArrayView2<'_, f64>) -> Array1<f64> {
        kernels::forward_values_chunked(&self.cfg, self.params.as_slice(), pts)
    }

    fn eval_grad_many(&self, pts: ndarray::ArrayView2<'_, f64>) -> (Array1<f64>, Array2<f64>) {
        kernels::forward_values_grads_chunked(&self.cfg, self.params.as_slice(), pts)
    }
}

impl TapeNet for ResNetConfig {
    fn input_dim(&self) -> usize {
        self.input_dim
    }

    fn build(&self, tape: &mut Tape, x: &[f64]) -> Result<TapePoint> {
        self.check_point(x)?;
        let pts = Array2::from_shape_vec((1, x.len()), x.to_vec()).unwrap();
        let out = tape.net_eval(self, pts.view(), true)?;
        Ok(TapePoint {
            value: out.value(0),
            input_grads: (0..self.input_dim).map(|j| out.input_grad(0, j)).collect(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn param_counts_match_reporting_convention() {
        let c6 = ResNetConfig::new(2, 50, 6).unwrap().param_count();
        assert_eq!(c6.total, 15450);
        assert_eq!(c6.excluding_input_map, 15350);
        let c3 = ResNetConfig::new(3, 50, 6).unwrap().param_count();
        assert_eq!(c3.total, 15500);
        assert_eq!(c3.excluding_input_map, 15350);
        let c2 = ResNetConfig::new(2, 50, 2).unwrap().param_count();
        assert_eq!(c2.total, 5250);
        assert_eq!(c2.excluding_input_map, 5150);
    }

    #[test]
    fn init_is_deterministic_and_bounded() {
        let cfg = ResNetConfig::new(2, 50, 6).unwrap();
        let a = init_params(&cfg, 42);
        let b = init_params(&cfg, 42);
        assert_eq!(a, b);
        assert_eq!(a.len(), 15450);
        let input_bound = 1.0 / (2f64).sqrt();
        for &x in &a.as_slice()[..100] {
            assert!(x.abs() <= input_bound);
        }
        let hidden_bound = 1.0 / (50f64).sqrt();
        for &x in &a.as_slice()[100..] {
            assert!(x.abs() <= hidden_bound);
        }
        assert_ne!(a, init_params(&cfg, 43));
    }

    #[test]
    fn forward_zero_params_is_zero() {
        let cfg = ResNetConfig::new(2, 8, 3).unwrap();
        let p = ParamVector::zeros(cfg.param_len());
        assert_eq!(forward(&cfg, &p, &[0.3, 0.9]).unwrap(), 0.0);
    }

    #[test]
    fn forward_skip_path_is_linear_map() {
        // L=1, W=0, b=0: output is a . (V x)
        let cfg = ResNetConfig::new(2, 2, 1).unwrap();
        let mut p = ParamVector::zeros(cfg.param_len());
        // V = identity
        p[0] = 1.0;
        p[3] = 1.0;
        // a = (1, 1)
        let ao = cfg.offset_output();
        p[ao] = 1.0;
        p[ao + 1] = 1.0;
        let x = [0.3, 0.4];
        assert!((forward(&cfg, &p, &x).unwrap() - 0.7).abs() < 1e-15);
    }

    #[test]
    fn forward_hand_evaluated_single_unit() {
        // d=1, N=1, L=1, V=1, W=1, b=0, a=1, x=2: h0=2, h1=2+sigma(2)=6
        let cfg = ResNetConfig::new(1, 1, 1).unwrap();
        let p = ParamVector::from_vec(vec![1.0, 1.0, 0.0, 1.0]);
        assert_eq!(forward(&cfg, &p, &[2.0]).unwrap(), 6.0);
    }

    #[test]
    fn forward_rejects_wrong_dimension() {
        let cfg = ResNetConfig::new(2, 4, 1).unwrap();
        let p = ParamVector::zeros(cfg.param_len());
        assert!(matches!(forward(&cfg, &p, &[1.0]), Err(Error::Dimension(_))));
    }

    #[test]
    fn output_layer_scaling_doubles_output() {
        let cfg = ResNetConfig::new(2, 10, 3).unwrap();
        let p = init_params(&cfg, 7);
        let mut p2 = p.clone();
        let ao = cfg.offset_output();
        for i in ao..ao + 10 {
            p2[i] *= 2.0;
        }
        for x in [[0.1, 0.9], [0.5, 0.5], [0.77, 0.13]] {
            let v = forward(&cfg, &p, &x).unwrap();
            let v2 = forward(&cfg, &p2, &x).unwrap();
            assert_eq!(v2, 2.0 * v);
        }
    }

    #[test]
    fn lipschitz_slope_bounded_on_unit_cube() {
        let cfg = ResNetConfig::new(2, 16, 3).unwrap();
        let p = init_params(&cfg, 11);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut draw = || -> f64 { rand::Rng::gen(&mut rng) };
        // estimate a slope bound from coarse pairs, then check it holds as
        // the pair separation shrinks
        let mut slope_est: f64 = 0.0;
        for _ in 0..200 {
            let a = [draw(), draw()];
            let b = [draw(), draw()];
            let dist = ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
            if dist < 1e-8 {
                continue;
            }
            let df = (forward(&cfg, &p, &a).unwrap() - forward(&cfg, &p, &b).unwrap()).abs();
            slope_est = slope_est.max(df / dist);
        }
        for k in 1..=6 {
            let delta = 10f64.powi(-k);
            let x = [0.41, 0.67];
            let y = [0.41 + delta / 2.0, 0.67 + delta / 2.0];
            let df = (forward(&cfg, &p, &x).unwrap() - forward(&cfg, &p, &y).unwrap()).abs();
            let dist = (2f64).sqrt() * delta / 2.0;
            assert!(df <= 2.0 * slope_est * dist + 1e-12);
        }
    }

    proptest! {
        #[test]
        fn flatten_unflatten_roundtrip(d in 1usize..4, n in 1usize..7, l in 1usize..5, seed in 0u64..1000) {
            let cfg = ResNetConfig::new(d, n, l).unwrap();
            let p = init_params(&cfg, seed);
            let s = cfg.unflatten(&p).unwrap();
            let back = cfg.flatten(&s);
            prop_assert_eq!(p, back);
        }
    }
}

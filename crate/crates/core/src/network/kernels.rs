//! Batched forward/backward kernels for the residual network.
//!
//! Activations are stored as `N x (1+dt)*B` matrices whose column blocks are
//! `[values | tangent_1 | ... | tangent_dt]`. Stacking the tangent planes
//! next to the value plane lets every layer run as a single GEMM, and the
//! reverse pass accumulates the weight gradient with one GEMM per layer as
//! well. `dt = 0` evaluates values only; `dt = d` also propagates the input
//! gradient, so losses containing `|grad phi|^2` backpropagate exactly
//! (forward-over-reverse).

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, ArrayViewMut2, Axis};

use super::ResNetConfig;

/// Saved activations of one batched forward pass.
pub struct ForwardTrace {
    /// `h_0 .. h_L`, each `N x (1+dt)*B`.
    hs: Vec<Array2<f64>>,
    /// Pre-activations `z_1 .. z_L`.
    zs: Vec<Array2<f64>>,
    /// The batch points, `B x d`.
    pts: Array2<f64>,
    /// Stacked outputs: `out[j*B + i]` is the value (`j = 0`) or the `j-1`
    /// input-derivative of sample `i`.
    pub out: Vec<f64>,
    pub dt: usize,
    pub b: usize,
}

/// Forward pass over a batch, keeping the trace needed for [`backprop`].
pub fn forward_trace(
    cfg: &ResNetConfig,
    params: &[f64],
    pts: ArrayView2<'_, f64>,
    dt: usize,
) -> ForwardTrace {
    let (d, n, l) = (cfg.input_dim, cfg.width, cfg.depth);
    debug_assert_eq!(pts.ncols(), d);
    debug_assert_eq!(params.len(), cfg.param_len());
    let b = pts.nrows();
    let m = (1 + dt) * b;
    let v = ArrayView2::from_shape((n, d), &params[..n * d]).unwrap();

    let mut h0 = Array2::zeros((n, m));
    {
        let mut vals = h0.slice_mut(s![.., 0..b]);
        general_mat_mul(1.0, &v, &pts.t(), 0.0, &mut vals);
    }
    for j in 0..dt {
        // d(Vx)/dx_j = V e_j, identical for every sample
        let col = v.column(j).insert_axis(Axis(1));
        h0.slice_mut(s![.., (1 + j) * b..(2 + j) * b])
            .assign(&col.broadcast((n, b)).unwrap());
    }

    let mut hs = Vec::with_capacity(l + 1);
    let mut zs = Vec::with_capacity(l);
    hs.push(h0);
    for layer in 0..l {
        let wo = cfg.offset_weight(layer);
        let bo = cfg.offset_bias(layer);
        let w = ArrayView2::from_shape((n, n), &params[wo..wo + n * n]).unwrap();
        let bias = &params[bo..bo + n];
        let mut z = Array2::zeros((n, m));
        general_mat_mul(1.0, &w, &hs[layer], 0.0, &mut z);
        let mut h = hs[layer].clone();
        {
            let zr = z.as_slice_mut().unwrap();
            let hr = h.as_slice_mut().unwrap();
            for r in 0..n {
                let row = r * m;
                for c in 0..b {
                    // bias feeds the value plane only
                    zr[row + c] += bias[r];
                    let t = zr[row + c];
                    if t > 0.0 {
                        hr[row + c] += t * t;
                        let slope = 2.0 * t;
                        for j in 0..dt {
                            let idx = row + (1 + j) * b + c;
                            hr[idx] += slope * zr[idx];
                        }
                    }
                }
            }
        }
        zs.push(z);
        hs.push(h);
    }

    let a = ArrayView1::from(&params[cfg.offset_output()..cfg.offset_output() + n]);
    let out = a.dot(&hs[l]).to_vec();
    ForwardTrace { hs, zs, pts: pts.to_owned(), out, dt, b }
}

/// Reverse pass: given adjoints of the stacked outputs (same layout as
/// `trace.out`), accumulate the loss gradient with respect to every network
/// parameter into `grad` (flat layout of [`super::ParamVector`]).
pub fn backprop(cfg: &ResNetConfig, params: &[f64], trace: &ForwardTrace, out_adj: &[f64], grad: &mut [f64]) {
    let (d, n, l) = (cfg.input_dim, cfg.width, cfg.depth);
    let (b, dt) = (trace.b, trace.dt);
    let m = (1 + dt) * b;
    debug_assert_eq!(out_adj.len(), m);
    debug_assert_eq!(grad.len(), cfg.param_len());

    let a = ArrayView1::from(&params[cfg.offset_output()..cfg.offset_output() + n]);
    let oa = ArrayView1::from(out_adj);

    // output weights: a_bar += h_L . out_adj
    let ga = trace.hs[l].dot(&oa);
    let ao = cfg.offset_output();
    for r in 0..n {
        grad[ao + r] += ga[r];
    }

    // running adjoint of h_l, starting from h_L_bar = a (outer) out_adj
    let mut g = Array2::zeros((n, m));
    general_mat_mul(
        1.0,
        &a.insert_axis(Axis(1)),
        &oa.insert_axis(Axis(0)),
        0.0,
        &mut g,
    );

    let mut zbar = Array2::<f64>::zeros((n, m));
    for layer in (0..l).rev() {
        let z = &trace.zs[layer];
        {
            let zr = z.as_slice().unwrap();
            let gr = g.as_slice().unwrap();
            let zb = zbar.as_slice_mut().unwrap();
            for r in 0..n {
                let row = r * m;
                for c in 0..b {
                    let t = zr[row + c];
                    if t > 0.0 {
                        let slope = 2.0 * t;
                        // value plane picks up the curvature term from each
                        // tangent plane: sigma''(z) * z_tan * h_tan_bar
                        let mut acc = slope * gr[row + c];
                        for j in 0..dt {
                            let idx = row + (1 + j) * b + c;
                            zb[idx] = slope * gr[idx];
                            acc += 2.0 * zr[idx] * gr[idx];
                        }
                        zb[row + c] = acc;
                    } else {
                        zb[row + c] = 0.0;
                        for j in 0..dt {
                            zb[row + (1 + j) * b + c] = 0.0;
                        }
                    }
                }
            }
        }
        let wo = cfg.offset_weight(layer);
        let bo = cfg.offset_bias(layer);
        {
            let mut gw = ArrayViewMut2::from_shape((n, n), &mut grad[wo..wo + n * n]).unwrap();
            general_mat_mul(1.0, &zbar, &trace.hs[layer].t(), 1.0, &mut gw);
        }
        {
            let zb = zbar.as_slice().unwrap();
            for r in 0..n {
                let row = r * m;
                let mut acc = 0.0;
                for c in 0..b {
                    acc += zb[row + c];
                }
                grad[bo + r] += acc;
            }
        }
        let w = ArrayView2::from_shape((n, n), &params[wo..wo + n * n]).unwrap();
        general_mat_mul(1.0, &w.t(), &zbar, 1.0, &mut g);
    }

    // input map: value plane against the points, tangent planes row-summed
    // into the corresponding column of V
    {
        let mut gv = ArrayViewMut2::from_shape((n, d), &mut grad[..n * d]).unwrap();
        general_mat_mul(1.0, &g.slice(s![.., 0..b]), &trace.pts, 1.0, &mut gv);
    }
    let gr = g.as_slice().unwrap();
    for j in 0..dt {
        for r in 0..n {
            let row = r * m + (1 + j) * b;
            let mut acc = 0.0;
            for c in 0..b {
                acc += gr[row + c];
            }
            grad[r * d + j] += acc;
        }
    }
}

/// Values at a batch of points (no trace kept).
pub fn forward_values(cfg: &ResNetConfig, params: &[f64], pts: ArrayView2<'_, f64>) -> Array1<f64> {
    Array1::from_vec(forward_trace(cfg, params, pts, 0).out)
}

/// Values and input gradients at a batch of points.
pub fn forward_values_grads(
    cfg: &ResNetConfig,
    params: &[f64],
    pts: ArrayView2<'_, f64>,
) -> (Array1<f64>, Array2<f64>) {
    let d = cfg.input_dim;
    let b = pts.nrows();
    let trace = forward_trace(cfg, params, pts, d);
    let vals = Array1::from_vec(trace.out[..b].to_vec());
    let mut grads = Array2::zeros((b, d));
    for j in 0..d {
        for i in 0..b {
            grads[[i, j]] = trace.out[(1 + j) * b + i];
        }
    }
    (vals, grads)
}

const EVAL_CHUNK: usize = 4096;

/// Chunked evaluation for large point sets (keeps peak memory flat).
pub fn forward_values_chunked(cfg: &ResNetConfig, params: &[f64], pts: ArrayView2<'_, f64>) -> Array1<f64> {
    let b = pts.nrows();
    let mut out = Array1::zeros(b);
    let mut start = 0;
    while start < b {
        let end = (start + EVAL_CHUNK).min(b);
        let vals = forward_values(cfg, params, pts.slice(s![start..end, ..]));
        out.slice_mut(s![start..end]).assign(&vals);
        start = end;
    }
    out
}

pub fn forward_values_grads_chunked(
    cfg: &ResNetConfig,
    params: &[f64],
    pts: ArrayView2<'_, f64>,
) -> (Array1<f64>, Array2<f64>) {
    let b = pts.nrows();
    let d = cfg.input_dim;
    let mut vals = Array1::zeros(b);
    let mut grads = Array2::zeros((b, d));
    let mut start = 0;
    while start < b {
        let end = (start + EVAL_CHUNK).min(b);
        let (v, g) = forward_values_grads(cfg, params, pts.slice(s![start..end, ..]));
        vals.slice_mut(s![start..end]).assign(&v);
        grads.slice_mut(s![start..end, ..]).assign(&g);
        start = end;
    }
    (vals, grads)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{forward, init_params, ParamVector};

    #[test]
    fn batched_values_match_scalar_forward() {
        let cfg = ResNetConfig::new(2, 13, 4).unwrap();
        let p = init_params(&cfg, 3);
        let pts =
            Array2::from_shape_vec((3, 2), vec![0.1, 0.9, 0.5, 0.5, 0.77, 0.13]).unwrap();
        let vals = forward_values(&cfg, p.as_slice(), pts.view());
        for i in 0..3 {
            let x = [pts[[i, 0]], pts[[i, 1]]];
            let want = forward(&cfg, &p, &x).unwrap();
            assert!((vals[i] - want).abs() <= 1e-14 * want.abs().max(1.0));
        }
    }

    #[test]
    fn batched_input_grads_match_finite_differences() {
        let cfg = ResNetConfig::new(3, 9, 3).unwrap();
        let p = init_params(&cfg, 12);
        let pts = Array2::from_shape_vec((2, 3), vec![0.2, 0.4, 0.6, 0.9, 0.1, 0.3]).unwrap();
        let (_, grads) = forward_values_grads(&cfg, p.as_slice(), pts.view());
        let h = 1e-6;
        for i in 0..2 {
            for j in 0..3 {
                let mut xp = [pts[[i, 0]], pts[[i, 1]], pts[[i, 2]]];
                let mut xm = xp;
                xp[j] += h;
                xm[j] -= h;
                let fd = (forward(&cfg, &p, &xp).unwrap() - forward(&cfg, &p, &xm).unwrap())
                    / (2.0 * h);
                assert!(
                    (grads[[i, j]] - fd).abs() <= 1e-8 * fd.abs().max(1.0),
                    "grad {} vs fd {}",
                    grads[[i, j]],
                    fd
                );
            }
        }
    }

    #[test]
    fn backprop_matches_finite_differences_through_input_grads() {
        // loss = sum_i [ phi(x_i) + sum_j (d phi / d x_j)(x_i) ]
        let cfg = ResNetConfig::new(2, 6, 2).unwrap();
        let p = init_params(&cfg, 99);
        let pts = Array2::from_shape_vec((4, 2), vec![0.1, 0.2, 0.8, 0.9, 0.4, 0.7, 0.6, 0.3])
            .unwrap();
        let loss = |pv: &ParamVector| -> f64 {
            let (vals, grads) = forward_values_grads(&cfg, pv.as_slice(), pts.view());
            vals.sum() + grads.sum()
        };
        let trace = forward_trace(&cfg, p.as_slice(), pts.view(), 2);
        let mut grad = vec![0.0; cfg.param_len()];
        let out_adj = vec![1.0; trace.out.len()];
        backprop(&cfg, p.as_slice(), &trace, &out_adj, &mut grad);
        let h = 1e-5;
        for k in (0..cfg.param_len()).step_by(7) {
            let mut pp = p.clone();
            pp[k] += h;
            let mut pm = p.clone();
            pm[k] -= h;
            let fd = (loss(&pp) - loss(&pm)) / (2.0 * h);
            assert!(
                (grad[k] - fd).abs() <= 2e-7 * fd.abs().max(1.0),
                "param {k}: analytic {} vs fd {}",
                grad[k],
                fd
            );
        }
    }

    #[test]
    fn chunked_evaluation_matches_direct() {
        let cfg = ResNetConfig::new(2, 5, 2).unwrap();
        let p = init_params(&cfg, 1);
        let pts = Array2::from_shape_fn((EVAL_CHUNK + 17, 2), |(i, j)| {
            ((i * 2 + j) as f64 * 0.618).fract()
        });
        let direct = forward_values(&cfg, p.as_slice(), pts.view());
        let chunked = forward_values_chunked(&cfg, p.as_slice(), pts.view());
        assert_eq!(direct, chunked);
    }
}

//! Eigenvalue readout: Rayleigh identity of a trained field, evaluated by
//! composite-trapezoid quadrature on the lattice.

use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::sampling::Grid;

use super::{Family, ProblemSpec};

/// Normalization threshold, matching the training-side collapse guard.
const NORM_EPS: f64 = 1e-12;

/// Eigenvalue of the normalized field `u / |u|`:
/// linear family `int(p |grad u|^2 + q u^2)`, Gross-Pitaevskii
/// `int(A |grad u|^2 + V u^2 + u^4)`, both by trapezoid quadrature on the
/// grid with gradients from the differentiation engine.
pub fn rayleigh_estimate(field: &dyn ScalarField, spec: &ProblemSpec, grid: &Grid) -> Result<f64> {
    if spec.family == Family::Elliptic {
        return Err(Error::Config("eigenvalue readout is defined for the eigen families only".into()));
    }
    if field.dim() != grid.dim || spec.dim != grid.dim {
        return Err(Error::Dimension(format!(
            "field dim {}, spec dim {}, grid dim {}",
            field.dim(),
            spec.dim,
            grid.dim
        )));
    }
    let weights = grid.trapezoid_weights();
    let (vals, grads) = field.eval_grad_many(grid.points.view());
    let d = grid.dim;

    let mut norm_sq = 0.0;
    for (i, &w) in weights.iter().enumerate() {
        norm_sq += w * vals[i] * vals[i];
    }
    if norm_sq < NORM_EPS {
        return Err(Error::Degenerate(format!("quadrature norm^2 = {norm_sq} below {NORM_EPS}")));
    }

    let mut second_order = 0.0;
    let mut quartic = 0.0;
    let mut g = vec![0.0; d];
    for (i, &w) in weights.iter().enumerate() {
        let x = grid.points.row(i);
        let x = x.as_slice().unwrap();
        for j in 0..d {
            g[j] = grads[[i, j]];
        }
        let quad = spec.diffusion_form(x, &g);
        let react = (spec.reaction)(x);
        second_order += w * (quad + react * vals[i] * vals[i]);
        if spec.family == Family::NonlinearEigen {
            quartic += w * vals[i].powi(4);
        }
    }
    let mut rho = second_order / norm_sq;
    if spec.family == Family::NonlinearEigen {
        rho += quartic / (norm_sq * norm_sq);
    }
    Ok(rho)
}

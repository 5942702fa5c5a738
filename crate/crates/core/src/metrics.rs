//! Discrete max-norm errors on the evaluation lattice, interior and
//! boundary splits, and the eigenvalue error with sign and scale alignment.

use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::problems::{rayleigh_estimate, ProblemSpec};
use crate::sampling::Grid;

/// Denominator guard for relative errors: below this the caller falls back
/// to absolute errors (as the eigen families do, where the boundary datum
/// is zero).
const REL_DENOM_EPS: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ErrorMode {
    Absolute,
    Relative,
}

/// One evaluation record. Relative errors and the eigenvalue error are
/// absent (not zero) where undefined.
#[derive(Clone, Debug)]
pub struct ErrorReport {
    pub epoch: u64,
    pub loss: Option<f64>,
    pub beta: f64,
    pub lr: f64,
    pub err_abs_in: f64,
    pub err_rel_in: Option<f64>,
    pub err_abs_bd: f64,
    pub err_rel_bd: Option<f64>,
    pub rho_rel_err: Option<f64>,
    pub wall_s: f64,
}

/// Discrete max norm of the difference over a point set, absolute or
/// relative. Relative mode requires the reference bounded away from zero.
pub fn max_norm_error(u_dl: &[f64], u_ref: &[f64], mode: ErrorMode) -> Result<f64> {
    if u_dl.len() != u_ref.len() {
        return Err(Error::Dimension(format!(
            "value vectors have lengths {} and {}",
            u_dl.len(),
            u_ref.len()
        )));
    }
    if u_dl.is_empty() {
        return Err(Error::Config("max-norm error over an empty point set".into()));
    }
    match mode {
        ErrorMode::Absolute => Ok(u_dl
            .iter()
            .zip(u_ref)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)),
        ErrorMode::Relative => {
            if u_ref.iter().any(|r| r.abs() <= REL_DENOM_EPS) {
                return Err(Error::Numeric(format!(
                    "relative error undefined: reference value within {REL_DENOM_EPS} of zero"
                )));
            }
            Ok(u_dl
                .iter()
                .zip(u_ref)
                .map(|(a, b)| ((a - b) / b).abs())
                .fold(0.0, f64::max))
        }
    }
}

/// Reference values on the lattice plus the reference eigenvalue (for the
/// eigen families).
#[derive(Clone, Debug)]
pub struct GridReference {
    pub values: Vec<f64>,
    pub rho: Option<f64>,
}

impl GridReference {
    pub fn from_field(field: &dyn ScalarField, grid: &Grid, rho: Option<f64>) -> Self {
        GridReference { values: field.eval_many(grid.points.view()).to_vec(), rho }
    }
}

fn gather(values: &[f64], idx: &[usize]) -> Vec<f64> {
    idx.iter().map(|&i| values[i]).collect()
}

/// Max-norm errors of an elliptic approximation against the reference on
/// the interior and boundary lattice splits; relative errors where the
/// reference permits.
pub fn elliptic_errors(
    field: &dyn ScalarField,
    reference: &GridReference,
    grid: &Grid,
) -> Result<(f64, Option<f64>, f64, Option<f64>)> {
    let vals = field.eval_many(grid.points.view()).to_vec();
    let mut out = Vec::with_capacity(2);
    for idx in [&grid.interior_idx, &grid.boundary_idx] {
        let dl = gather(&vals, idx);
        let rf = gather(&reference.values, idx);
        let abs = max_norm_error(&dl, &rf, ErrorMode::Absolute)?;
        let rel = max_norm_error(&dl, &rf, ErrorMode::Relative).ok();
        out.push((abs, rel));
    }
    Ok((out[0].0, out[0].1, out[1].0, out[1].1))
}

/// Eigen errors: normalize the approximation by quadrature, align its sign
/// with the reference, and report absolute max-norm errors plus the
/// relative eigenvalue error `|rho_dl - rho_ref| / rho_ref`.
pub fn eigen_error(
    field: &dyn ScalarField,
    spec: &ProblemSpec,
    grid: &Grid,
    reference: &GridReference,
) -> Result<(f64, f64, Option<f64>)> {
    let weights = grid.trapezoid_weights();
    let vals = field.eval_many(grid.points.view()).to_vec();
    let norm_dl = quad_norm(&vals, &weights)?;
    let norm_ref = quad_norm(&reference.values, &weights)?;

    let dot: f64 = vals.iter().zip(&reference.values).map(|(a, b)| a * b).sum();
    let sign = if dot < 0.0 { -1.0 } else { 1.0 };

    let aligned: Vec<f64> = vals.iter().map(|v| sign * v / norm_dl).collect();
    let ref_normed: Vec<f64> = reference.values.iter().map(|v| v / norm_ref).collect();

    let ea_in = max_norm_error(
        &gather(&aligned, &grid.interior_idx),
        &gather(&ref_normed, &grid.interior_idx),
        ErrorMode::Absolute,
    )?;
    let ea_bd = max_norm_error(
        &gather(&aligned, &grid.boundary_idx),
        &gather(&ref_normed, &grid.boundary_idx),
        ErrorMode::Absolute,
    )?;

    let rho_rel = match reference.rho {
        Some(rho_ref) => {
            let rho_dl = rayleigh_estimate(field, spec, grid)?;
            Some((rho_dl - rho_ref).abs() / rho_ref)
        }
        None => None,
    };
    Ok((ea_in, ea_bd, rho_rel))
}

fn quad_norm(values: &[f64], weights: &[f64]) -> Result<f64> {
    let norm_sq: f64 = values.iter().zip(weights).map(|(v, w)| w * v * v).sum();
    if norm_sq < 1e-24 {
        return Err(Error::Degenerate(format!("quadrature norm^2 = {norm_sq}")));
    }
    Ok(norm_sq.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::FnField;
    use crate::problems::builtin;
    use crate::sampling::grid_points;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    #[test]
    fn identical_fields_have_zero_error() {
        let a = [1.0, 2.0, 3.0];
        assert_eq!(max_norm_error(&a, &a, ErrorMode::Absolute).unwrap(), 0.0);
        assert_eq!(max_norm_error(&a, &a, ErrorMode::Relative).unwrap(), 0.0);
    }

    #[test]
    fn single_point_perturbation_shows_up() {
        let a = [1.0, 2.5, 3.0];
        let b = [1.0, 2.0, 3.0];
        assert_eq!(max_norm_error(&a, &b, ErrorMode::Absolute).unwrap(), 0.5);
    }

    #[test]
    fn relative_error_hand_value() {
        // reference 4.5, approximation 4.455 at one point -> 1%
        let a = [4.455, 3.0];
        let b = [4.5, 3.0];
        let rel = max_norm_error(&a, &b, ErrorMode::Relative).unwrap();
        assert!((rel - 0.01).abs() < 1e-12);
    }

    #[test]
    fn near_zero_reference_rejects_relative_mode() {
        let a = [1.0];
        let b = [1e-12];
        assert!(matches!(
            max_norm_error(&a, &b, ErrorMode::Relative),
            Err(Error::Numeric(_))
        ));
    }

    #[test]
    fn eigen_error_sign_and_scale_invariance() {
        let spec = builtin("eigen2d").unwrap();
        let grid = grid_points(2, 1.0 / 16.0).unwrap();
        let u = spec.exact_solution.clone().unwrap();
        let reference = GridReference::from_field(u.as_ref(), &grid, spec.exact_eigenvalue);

        let flipped = FnField::new(
            2,
            |x: &[f64]| -((PI * (x[0] - 1.0)).sin() * (PI * (x[1] - 1.0)).sin()),
            |x: &[f64], g: &mut [f64]| {
                g[0] = -PI * (PI * (x[0] - 1.0)).cos() * (PI * (x[1] - 1.0)).sin();
                g[1] = -PI * (PI * (x[0] - 1.0)).sin() * (PI * (x[1] - 1.0)).cos();
            },
        );
        let (ea_in, ea_bd, rho) = eigen_error(&flipped, &spec, &grid, &reference).unwrap();
        assert_eq!(ea_in, 0.0);
        assert_eq!(ea_bd, 0.0);
        assert!(rho.unwrap() < 1e-3);

        let scaled = FnField::new(
            2,
            |x: &[f64]| 1.01 * (PI * (x[0] - 1.0)).sin() * (PI * (x[1] - 1.0)).sin(),
            |x: &[f64], g: &mut [f64]| {
                g[0] = 1.01 * PI * (PI * (x[0] - 1.0)).cos() * (PI * (x[1] - 1.0)).sin();
                g[1] = 1.01 * PI * (PI * (x[0] - 1.0)).sin() * (PI * (x[1] - 1.0)).cos();
            },
        );
        let (ea_in, _, _) = eigen_error(&scaled, &spec, &grid, &reference).unwrap();
        assert!(ea_in <= 1e-12);
    }

    proptest! {
        // seminorm on the difference: triangle inequality on random triples
        #[test]
        fn max_norm_triangle_inequality(
            a in proptest::collection::vec(-10.0f64..10.0, 1..20),
            b in proptest::collection::vec(-10.0f64..10.0, 1..20),
            c in proptest::collection::vec(-10.0f64..10.0, 1..20),
        ) {
            let n = a.len().min(b.len()).min(c.len());
            let (a, b, c) = (&a[..n], &b[..n], &c[..n]);
            let ab = max_norm_error(a, b, ErrorMode::Absolute).unwrap();
            let bc = max_norm_error(b, c, ErrorMode::Absolute).unwrap();
            let ac = max_norm_error(a, c, ErrorMode::Absolute).unwrap();
            prop_assert!(ac <= ab + bc + 1e-12);
        }
    }
}

//! The three variational problem families, their Monte Carlo loss
//! estimators, the multiplier least-squares objective, and benchmark
//! instances with closed-form solutions.

mod losses;
mod rayleigh;

pub use losses::{
    j_lambda, lagrangian, lagrangian_elliptic, lagrangian_linear_eigen,
    lagrangian_nonlinear_eigen, penalty_objective, LossBatches, MultiplierSign, NetRef, PrimalRef,
};
pub use rayleigh::rayleigh_estimate;

use std::f64::consts::PI;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::field::{FnField, ScalarField};

/// Pointwise scalar coefficient on the closed unit cube.
pub type Coef = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Pointwise symmetric `d x d` diffusion matrix (row-major, `d <= 3`).
pub type MatrixCoef = Arc<dyn Fn(&[f64]) -> [[f64; 3]; 3] + Send + Sync>;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Family {
    /// `-div(A grad u) + c u = f` in the cube, `u = g` on the boundary.
    Elliptic,
    /// Smallest eigenpair of `-div(p grad u) + q u = rho u`, zero boundary.
    LinearEigen,
    /// Gross-Pitaevskii ground state: `-div(A grad u) + V u + u^3 = rho u`,
    /// zero boundary, unit L2 norm.
    NonlinearEigen,
}

/// One problem instance. Coefficient slots are shared across families:
/// `diffusion` is A (elliptic, nonlinear) or p (linear eigen); `reaction`
/// is c, q, or the potential V; `source` and `boundary` are the elliptic
/// f and g (identically zero for the eigenvalue families).
#[derive(Clone)]
pub struct ProblemSpec {
    pub name: String,
    pub family: Family,
    pub dim: usize,
    pub diffusion: Coef,
    /// Full matrix diffusion; when set it replaces `diffusion` inside the
    /// quadratic form `grad v . A grad v` (custom problems only).
    pub diffusion_matrix: Option<MatrixCoef>,
    pub reaction: Coef,
    pub source: Coef,
    pub boundary: Coef,
    pub exact_solution: Option<Arc<dyn ScalarField>>,
    pub exact_eigenvalue: Option<f64>,
}

impl ProblemSpec {
    /// Quadratic form `g . A(x) g` at `x` for a gradient `g`.
    pub(crate) fn diffusion_form(&self, x: &[f64], g: &[f64]) -> f64 {
        match &self.diffusion_matrix {
            None => {
                let a = (self.diffusion)(x);
                a * g.iter().map(|&t| t * t).sum::<f64>()
            }
            Some(m) => {
                let a = m(x);
                let d = x.len();
                let mut acc = 0.0;
                for i in 0..d {
                    for j in 0..d {
                        acc += g[i] * a[i][j] * g[j];
                    }
                }
                acc
            }
        }
    }

    pub fn is_eigen(&self) -> bool {
        matches!(self.family, Family::LinearEigen | Family::NonlinearEigen)
    }
}

fn constant(v: f64) -> Coef {
    Arc::new(move |_| v)
}

fn poisson_exact(d: usize) -> Arc<dyn ScalarField> {
    Arc::new(FnField::new(
        d,
        move |x: &[f64]| x.iter().map(|&t| (2.0 * PI * t).sin() + 1.25).sum(),
        move |x: &[f64], g: &mut [f64]| {
            for (j, &t) in x.iter().enumerate() {
                g[j] = 2.0 * PI * (2.0 * PI * t).cos();
            }
        },
    ))
}

fn eigen_exact(d: usize) -> Arc<dyn ScalarField> {
    Arc::new(FnField::new(
        d,
        move |x: &[f64]| x.iter().map(|&t| (PI * (t - 1.0)).sin()).product(),
        move |x: &[f64], g: &mut [f64]| {
            for j in 0..x.len() {
                let mut acc = PI * (PI * (x[j] - 1.0)).cos();
                for (i, &t) in x.iter().enumerate() {
                    if i != j {
                        acc *= (PI * (t - 1.0)).sin();
                    }
                }
                g[j] = acc;
            }
        },
    ))
}

/// Benchmark instances: `poisson2d`, `poisson3d`, `eigen2d`, `eigen3d`,
/// `gp2d`, `gp3d`.
pub fn builtin(name: &str) -> Result<ProblemSpec> {
    let (family, dim) = match name {
        "poisson2d" => (Family::Elliptic, 2),
        "poisson3d" => (Family::Elliptic, 3),
        "eigen2d" => (Family::LinearEigen, 2),
        "eigen3d" => (Family::LinearEigen, 3),
        "gp2d" => (Family::NonlinearEigen, 2),
        "gp3d" => (Family::NonlinearEigen, 3),
        _ => {
            return Err(Error::Config(format!(
                "unknown problem name {name:?} (expected poisson2d, poisson3d, eigen2d, eigen3d, gp2d, gp3d)"
            )))
        }
    };
    let spec = match family {
        Family::Elliptic => {
            // -Laplace u = f with u = sum_i (sin(2 pi x_i) + 1.25)
            let exact = poisson_exact(dim);
            let exact_for_g = exact.clone();
            ProblemSpec {
                name: name.to_string(),
                family,
                dim,
                diffusion: constant(1.0),
                diffusion_matrix: None,
                reaction: constant(0.0),
                source: Arc::new(move |x: &[f64]| {
                    4.0 * PI * PI * x.iter().map(|&t| (2.0 * PI * t).sin()).sum::<f64>()
                }),
                boundary: Arc::new(move |x: &[f64]| exact_for_g.eval(x)),
                exact_solution: Some(exact),
                exact_eigenvalue: None,
            }
        }
        Family::LinearEigen => ProblemSpec {
            name: name.to_string(),
            family,
            dim,
            diffusion: constant(1.0),
            diffusion_matrix: None,
            reaction: constant(0.0),
            source: constant(0.0),
            boundary: constant(0.0),
            exact_solution: Some(eigen_exact(dim)),
            exact_eigenvalue: Some(dim as f64 * PI * PI),
        },
        Family::NonlinearEigen => ProblemSpec {
            name: name.to_string(),
            family,
            dim,
            diffusion: constant(1.0),
            diffusion_matrix: None,
            reaction: Arc::new(|x: &[f64]| x.iter().map(|&t| t * t).sum()),
            source: constant(0.0),
            boundary: constant(0.0),
            exact_solution: None,
            exact_eigenvalue: None,
        },
    };
    Ok(spec)
}

//! Scalar fields on the unit cube: the common interface between networks,
//! closed-form solutions, and interpolated grid data.

use ndarray::{Array1, Array2, ArrayView2};

/// A scalar function on `[0,1]^d` with a gradient, evaluable pointwise or in
/// batches. Implementors: trained networks, analytic solutions, finite
/// difference grids.
pub trait ScalarField: Send + Sync {
    fn dim(&self) -> usize;

    fn eval(&self, x: &[f64]) -> f64;

    /// Writes the gradient into `grad[..dim]` and returns the value.
    fn eval_grad(&self, x: &[f64], grad: &mut [f64]) -> f64;

    fn eval_many(&self, pts: ArrayView2<'_, f64>) -> Array1<f64> {
        Array1::from_iter(pts.rows().into_iter().map(|r| self.eval(r.as_slice().unwrap())))
    }

    fn eval_grad_many(&self, pts: ArrayView2<'_, f64>) -> (Array1<f64>, Array2<f64>) {
        let d = self.dim();
        let b = pts.nrows();
        let mut vals = Array1::zeros(b);
        let mut grads = Array2::zeros((b, d));
        let mut g = vec![0.0; d];
        for i in 0..b {
            vals[i] = self.eval_grad(pts.row(i).as_slice().unwrap(), &mut g);
            for j in 0..d {
                grads[[i, j]] = g[j];
            }
        }
        (vals, grads)
    }
}

/// Field defined by a pair of closures (value and gradient).
pub struct FnField<F, G> {
    dim: usize,
    value: F,
    gradient: G,
}

impl<F, G> FnField<F, G>
where
    F: Fn(&[f64]) -> f64 + Send + Sync,
    G: Fn(&[f64], &mut [f64]) + Send + Sync,
{
    pub fn new(dim: usize, value: F, gradient: G) -> Self {
        FnField { dim, value, gradient }
    }
}

impl<F, G> ScalarField for FnField<F, G>
where
    F: Fn(&[f64]) -> f64 + Send + Sync,
    G: Fn(&[f64], &mut [f64]) + Send + Sync,
{
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, x: &[f64]) -> f64 {
        (self.value)(x)
    }

    fn eval_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        (self.gradient)(x, grad);
        (self.value)(x)
    }
}

/// Boundary cutoff `l(x) = prod_i x_i (1 - x_i)`: vanishes on the whole
/// boundary of the unit cube.
pub fn cutoff(x: &[f64]) -> f64 {
    x.iter().map(|&t| t * (1.0 - t)).product()
}

/// Gradient of [`cutoff`], written into `grad`.
pub fn cutoff_grad(x: &[f64], grad: &mut [f64]) {
    let d = x.len();
    for j in 0..d {
        let mut rest = 1.0;
        for (i, &t) in x.iter().enumerate() {
            if i != j {
                rest *= t * (1.0 - t);
            }
        }
        grad[j] = (1.0 - 2.0 * x[j]) * rest;
    }
}

/// `l(x) * psi(x)`: wraps any field so it satisfies a homogeneous Dirichlet
/// condition exactly.
pub struct CutoffField<S>(pub S);

impl<S: ScalarField> ScalarField for CutoffField<S> {
    fn dim(&self) -> usize {
        self.0.dim()
    }

    fn eval(&self, x: &[f64]) -> f64 {
        cutoff(x) * self.0.eval(x)
    }

    fn eval_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        let psi = self.0.eval_grad(x, grad);
        let l = cutoff(x);
        let mut lg = [0.0; 8];
        cutoff_grad(x, &mut lg[..x.len()]);
        for j in 0..x.len() {
            grad[j] = lg[j] * psi + l * grad[j];
        }
        l * psi
    }

    fn eval_many(&self, pts: ArrayView2<'_, f64>) -> Array1<f64> {
        let mut vals = self.0.eval_many(pts);
        for (i, row) in pts.rows().into_iter().enumerate() {
            vals[i] *= cutoff(row.as_slice().unwrap());
        }
        vals
    }

    fn eval_grad_many(&self, pts: ArrayView2<'_, f64>) -> (Array1<f64>, Array2<f64>) {
        let (mut vals, mut grads) = self.0.eval_grad_many(pts);
        let d = self.dim();
        let mut lg = vec![0.0; d];
        for (i, row) in pts.rows().into_iter().enumerate() {
            let x = row.as_slice().unwrap();
            let l = cutoff(x);
            cutoff_grad(x, &mut lg);
            for j in 0..d {
                grads[[i, j]] = lg[j] * vals[i] + l * grads[[i, j]];
            }
            vals[i] *= l;
        }
        (vals, grads)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cutoff_vanishes_on_faces_and_peaks_at_center() {
        assert_eq!(cutoff(&[0.0, 0.3]), 0.0);
        assert_eq!(cutoff(&[0.7, 1.0]), 0.0);
        assert!((cutoff(&[0.5, 0.5]) - 0.0625).abs() < 1e-15);
    }

    #[test]
    fn cutoff_gradient_matches_finite_differences() {
        let x = [0.3, 0.8, 0.45];
        let mut g = [0.0; 3];
        cutoff_grad(&x, &mut g);
        for j in 0..3 {
            let mut xp = x;
            let mut xm = x;
            xp[j] += 1e-6;
            xm[j] -= 1e-6;
            let fd = (cutoff(&xp) - cutoff(&xm)) / 2e-6;
            assert!((g[j] - fd).abs() < 1e-9);
        }
    }

    #[test]
    fn cutoff_field_zero_on_boundary_nonzero_inside() {
        let psi = FnField::new(2, |_| 1.0, |_, g| g.fill(0.0));
        let f = CutoffField(psi);
        assert_eq!(f.eval(&[0.0, 0.4]), 0.0);
        assert!((f.eval(&[0.5, 0.5]) - 0.0625).abs() < 1e-15);
        // on the face x0 = 0 the normal derivative survives
        let mut g = [0.0; 2];
        f.eval_grad(&[0.0, 0.5], &mut g);
        assert!((g[0] - 0.25).abs() < 1e-15);
        assert_eq!(g[1], 0.0);
    }
}

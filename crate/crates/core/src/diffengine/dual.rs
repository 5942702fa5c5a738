//! Forward-mode scalar carrying a value and a short input-tangent vector.

use std::ops::{Add, Div, Mul, Neg, Sub};

/// Largest supported input dimension for tangent propagation.
pub const MAX_TANGENT_DIM: usize = 3;

/// A value together with its derivatives along up to [`MAX_TANGENT_DIM`]
/// input directions. Arithmetic follows the chain rule exactly; unused
/// tangent slots stay zero, so mixing widths takes the wider one.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Dual {
    value: f64,
    tangent: [f64; MAX_TANGENT_DIM],
    dim: usize,
}

impl Dual {
    pub fn constant(value: f64) -> Self {
        Dual { value, tangent: [0.0; MAX_TANGENT_DIM], dim: 0 }
    }

    /// A value with an explicit tangent vector (`tangent.len() <= 3`).
    pub fn seeded(value: f64, tangent: &[f64]) -> Self {
        assert!(tangent.len() <= MAX_TANGENT_DIM, "tangent dimension above {MAX_TANGENT_DIM}");
        let mut t = [0.0; MAX_TANGENT_DIM];
        t[..tangent.len()].copy_from_slice(tangent);
        Dual { value, tangent: t, dim: tangent.len() }
    }

    /// Input variable `x_axis` of a `dim`-dimensional point: unit tangent.
    pub fn variable(value: f64, axis: usize, dim: usize) -> Self {
        assert!(axis < dim && dim <= MAX_TANGENT_DIM);
        let mut t = [0.0; MAX_TANGENT_DIM];
        t[axis] = 1.0;
        Dual { value, tangent: t, dim }
    }

    pub fn value(&self) -> f64 {
        self.value
    }

    pub fn tangent(&self) -> &[f64] {
        &self.tangent[..self.dim]
    }

    pub fn tangent_dim(&self) -> usize {
        self.dim
    }

    /// Activation sigma(t) = max(t, 0)^2. Left-value convention at the kink:
    /// sigma'(0) = 0.
    pub fn sq_relu(self) -> Dual {
        if self.value > 0.0 {
            let mut t = [0.0; MAX_TANGENT_DIM];
            for k in 0..self.dim {
                t[k] = 2.0 * self.value * self.tangent[k];
            }
            Dual { value: self.value * self.value, tangent: t, dim: self.dim }
        } else {
            Dual { value: 0.0, tangent: [0.0; MAX_TANGENT_DIM], dim: self.dim }
        }
    }

    pub fn sq(self) -> Dual {
        let mut t = [0.0; MAX_TANGENT_DIM];
        for k in 0..self.dim {
            t[k] = 2.0 * self.value * self.tangent[k];
        }
        Dual { value: self.value * self.value, tangent: t, dim: self.dim }
    }

    pub fn scale(self, c: f64) -> Dual {
        let mut t = [0.0; MAX_TANGENT_DIM];
        for k in 0..self.dim {
            t[k] = c * self.tangent[k];
        }
        Dual { value: c * self.value, tangent: t, dim: self.dim }
    }
}

impl Add for Dual {
    type Output = Dual;
    fn add(self, rhs: Dual) -> Dual {
        let dim = self.dim.max(rhs.dim);
        let mut t = [0.0; MAX_TANGENT_DIM];
        for k in 0..dim {
            t[k] = self.tangent[k] + rhs.tangent[k];
        }
        Dual { value: self.value + rhs.value, tangent: t, dim }
    }
}

impl Sub for Dual {
    type Output = Dual;
    fn sub(self, rhs: Dual) -> Dual {
        let dim = self.dim.max(rhs.dim);
        let mut t = [0.0; MAX_TANGENT_DIM];
        for k in 0..dim {
            t[k] = self.tangent[k] - rhs.tangent[k];
        }
        Dual { value: self.value - rhs.value, tangent: t, dim }
    }
}

impl Mul for Dual {
    type Output = Dual;
    fn mul(self, rhs: Dual) -> Dual {
        let dim = self.dim.max(rhs.dim);
        let mut t = [0.0; MAX_TANGENT_DIM];
        for k in 0..dim {
            t[k] = self.tangent[k] * rhs.value + self.value * rhs.tangent[k];
        }
        Dual { value: self.value * rhs.value, tangent: t, dim }
    }
}

impl Div for Dual {
    type Output = Dual;
    fn div(self, rhs: Dual) -> Dual {
        let dim = self.dim.max(rhs.dim);
        let inv2 = 1.0 / (rhs.value * rhs.value);
        let mut t = [0.0; MAX_TANGENT_DIM];
        for k in 0..dim {
            t[k] = (self.tangent[k] * rhs.value - self.value * rhs.tangent[k]) * inv2;
        }
        Dual { value: self.value / rhs.value, tangent: t, dim }
    }
}

impl Neg for Dual {
    type Output = Dual;
    fn neg(self) -> Dual {
        let mut t = [0.0; MAX_TANGENT_DIM];
        for k in 0..self.dim {
            t[k] = -self.tangent[k];
        }
        Dual { value: -self.value, tangent: t, dim: self.dim }
    }
}

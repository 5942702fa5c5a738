//! Differentiation engine for scalar-valued networks: values, input
//! gradients (forward mode), and parameter gradients of composite losses
//! that themselves contain input gradients (forward-over-reverse).

mod dual;
mod tape;

pub use dual::{Dual, MAX_TANGENT_DIM};
pub use tape::{
    evaluate, grad_params, grad_params_of_input_grad, NetOutputs, Tape, TapeNet, TapePoint, Var,
};

use crate::error::{Error, Result};

/// Value and directional derivative of a dual-evaluable function at `x`
/// along `direction`. Seeding all `d` canonical directions reproduces the
/// full input gradient.
pub fn forward_jvp<F>(eval: F, x: &[f64], direction: &[f64]) -> Result<(f64, f64)>
where
    F: FnOnce(&[Dual]) -> Result<Dual>,
{
    if x.len() != direction.len() {
        return Err(Error::Config(format!(
            "point has dimension {}, direction has dimension {}",
            x.len(),
            direction.len()
        )));
    }
    let inputs: Vec<Dual> = x
        .iter()
        .zip(direction)
        .map(|(&v, &t)| Dual::seeded(v, &[t]))
        .collect();
    let out = eval(&inputs)?;
    Ok((out.value(), out.tangent().first().copied().unwrap_or(0.0)))
}

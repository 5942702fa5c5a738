//! Adam with bias correction and an exponentially decaying learning rate.

use crate::error::{Error, Result};
use crate::network::ParamVector;

/// Adam hyperparameters.
#[derive(Clone, Copy, Debug)]
pub struct AdamParams {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        AdamParams { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Moment estimates for one parameter vector.
#[derive(Clone, Debug)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
    hp: AdamParams,
}

impl AdamState {
    pub fn new(len: usize, hp: AdamParams) -> Self {
        AdamState { m: vec![0.0; len], v: vec![0.0; len], t: 0, hp }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    /// Drop accumulated moments (cold restart).
    pub fn reset(&mut self) {
        self.m.iter_mut().for_each(|x| *x = 0.0);
        self.v.iter_mut().for_each(|x| *x = 0.0);
        self.t = 0;
    }

    /// One bias-corrected Adam update of `params` in place.
    pub fn step(&mut self, params: &mut ParamVector, grad: &[f64], lr: f64) -> Result<()> {
        if params.len() != self.m.len() || grad.len() != self.m.len() {
            return Err(Error::Dimension(format!(
                "adam state has length {}, params {}, grad {}",
                self.m.len(),
                params.len(),
                grad.len()
            )));
        }
        if lr.is_nan() || lr <= 0.0 {
            return Err(Error::Config(format!("learning rate must be positive, got {lr}")));
        }
        if let Some((i, g)) = grad.iter().enumerate().find(|(_, g)| !g.is_finite()) {
            return Err(Error::Numeric(format!("gradient component {i} is {g}")));
        }
        self.t += 1;
        let b1 = self.hp.beta1;
        let b2 = self.hp.beta2;
        let bc1 = 1.0 - b1.powi(self.t as i32);
        let bc2 = 1.0 - b2.powi(self.t as i32);
        let p = params.as_mut_slice();
        for i in 0..p.len() {
            let g = grad[i];
            self.m[i] = b1 * self.m[i] + (1.0 - b1) * g;
            self.v[i] = b2 * self.v[i] + (1.0 - b2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            p[i] -= lr * m_hat / (v_hat.sqrt() + self.hp.eps);
        }
        Ok(())
    }
}

/// Exponential decay: `base * factor^(step / total_steps)`.
#[derive(Clone, Copy, Debug)]
pub struct LrSchedule {
    pub base: f64,
    pub decay_factor: f64,
    pub decay_total_steps: f64,
}

impl LrSchedule {
    pub fn new(base: f64, decay_factor: f64, decay_total_steps: f64) -> Self {
        LrSchedule { base, decay_factor, decay_total_steps }
    }

    pub fn at(&self, step: u64) -> f64 {
        self.base * self.decay_factor.powf(step as f64 / self.decay_total_steps)
    }
}

/// The default schedule: reach `0.01 * base` after 50000 steps.
pub fn lr_at(step: u64, base_lr: f64) -> f64 {
    LrSchedule::new(base_lr, 0.01, 50_000.0).at(step)
}

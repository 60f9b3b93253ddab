//! Adam optimizer with bias correction; the weight-decay term is added to
//! the gradient before the moment update.

use super::ModelParams;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct AdamHyper {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        AdamHyper { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay: 5e-4 }
    }
}

impl AdamHyper {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr.is_finite() && self.lr >= 0.0) {
            return Err(Error::config(format!("learning rate must be >= 0, got {}", self.lr)));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::config(format!("{name} must be in [0,1), got {b}")));
            }
        }
        if !(self.eps > 0.0) {
            return Err(Error::config(format!("eps must be > 0, got {}", self.eps)));
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return Err(Error::config(format!(
                "weight decay must be >= 0, got {}",
                self.weight_decay
            )));
        }
        Ok(())
    }
}

/// Per-parameter moment accumulators plus the step counter.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub hyper: AdamHyper,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
    /// Indices skipped entirely (no update, no decay); used to freeze
    /// stream parameters while training a fusion head.
    frozen: Option<Vec<bool>>,
}

impl AdamState {
    pub fn new(n_params: usize, hyper: AdamHyper) -> Self {
        AdamState { hyper, m: vec![0.0; n_params], v: vec![0.0; n_params], step: 0, frozen: None }
    }

    pub fn with_frozen(mut self, mask: Vec<bool>) -> Result<Self> {
        if mask.len() != self.m.len() {
            return Err(Error::config(format!(
                "frozen mask length {} does not match {} parameters",
                mask.len(),
                self.m.len()
            )));
        }
        self.frozen = Some(mask);
        Ok(self)
    }

    /// One update over flat parameter/gradient vectors.
    pub fn update(&mut self, theta: &mut [f64], grad: &[f64]) -> Result<()> {
        if theta.len() != self.m.len() || grad.len() != self.m.len() {
            return Err(Error::data(format!(
                "adam state sized for {} parameters, got theta {} / grad {}",
                self.m.len(),
                theta.len(),
                grad.len()
            )));
        }
        if let Some(bad) = grad.iter().position(|g| !g.is_finite()) {
            return Err(Error::Divergence(format!(
                "non-finite gradient at parameter {bad}"
            )));
        }
        let h = self.hyper;
        self.step += 1;
        let bc1 = 1.0 - h.beta1.powi(self.step as i32);
        let bc2 = 1.0 - h.beta2.powi(self.step as i32);
        for i in 0..theta.len() {
            if self.frozen.as_ref().is_some_and(|f| f[i]) {
                continue;
            }
            let g = grad[i] + h.weight_decay * theta[i];
            self.m[i] = h.beta1 * self.m[i] + (1.0 - h.beta1) * g;
            self.v[i] = h.beta2 * self.v[i] + (1.0 - h.beta2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            theta[i] -= h.lr * m_hat / (v_hat.sqrt() + h.eps);
        }
        Ok(())
    }
}

/// Applies one Adam step to a structured parameter tree.
pub fn adam_step(state: &mut AdamState, params: &mut ModelParams, grads: &ModelParams) -> Result<()> {
    let mut theta = params.to_flat();
    let g = grads.to_flat();
    state.update(&mut theta, &g)?;
    params.copy_from_flat(&theta)
}

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{Architecture, Weights};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = (0.0..1.0).contains(&self.beta1) && (0.0..1.0).contains(&self.beta2) && self.epsilon > 0.0;
        if !ok {
            return Err(Error::Config(format!(
                "Adam needs β₁, β₂ in [0, 1) and ε > 0, got {self:?}"
            )));
        }
        Ok(())
    }
}

/// First and second moment estimates plus the step counter.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: Weights,
    pub v: Weights,
    pub t: u64,
}

impl AdamState {
    pub fn new(arch: &Architecture) -> Self {
        Self {
            m: Weights::zeros(arch),
            v: Weights::zeros(arch),
            t: 0,
        }
    }

    /// One bias-corrected Adam update of `params` along `grad`.
    pub fn step(&mut self, params: &mut Weights, grad: &Weights, lr: f64, cfg: &AdamConfig) {
        self.t += 1;
        let bc1 = 1.0 - cfg.beta1.powi(self.t as i32);
        let bc2 = 1.0 - cfg.beta2.powi(self.t as i32);
        let tensors = params
            .tensors_mut()
            .into_iter()
            .zip(grad.tensors())
            .zip(self.m.tensors_mut())
            .zip(self.v.tensors_mut());
        for (((p, g), m), v) in tensors {
            for i in 0..p.len() {
                let gi = g[i];
                m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * gi;
                v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * gi * gi;
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                p[i] -= lr * m_hat / (v_hat.sqrt() + cfg.epsilon);
            }
        }
    }
}

/// Single Adam step, for callers that keep their own state.
pub fn adam_step(params: &mut Weights, grad: &Weights, state: &mut AdamState, lr: f64, cfg: &AdamConfig) {
    state.step(params, grad, lr, cfg);
}

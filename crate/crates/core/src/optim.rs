//! Adan with per-group learning rates.
//!
//! The update follows the reference Adan formulation:
//!
//! ```text
//! m ← β₁·m + (1−β₁)·g
//! v ← β₂·v + (1−β₂)·(g − g_prev)
//! n ← β₃·n + (1−β₃)·(g + β₂·(g − g_prev))²
//! x ← x − lr · (m/(1−β₁ᵗ) + β₂·v/(1−β₂ᵗ)) / (sqrt(n/(1−β₃ᵗ)) + ε)
//! ```
//!
//! with `g_prev = g` on the first step and no weight decay.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::GaussianSet;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdanConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub beta3: f64,
    pub eps: f64,
}

impl Default for AdanConfig {
    fn default() -> Self {
        Self {
            beta1: 0.98,
            beta2: 0.92,
            beta3: 0.99,
            eps: 1e-8,
        }
    }
}

/// Moment buffers for one flat parameter array.
#[derive(Debug, Clone, PartialEq)]
pub struct Adan {
    config: AdanConfig,
    step: u64,
    exp_avg: Vec<f64>,
    exp_avg_diff: Vec<f64>,
    exp_avg_sq: Vec<f64>,
    prev_grad: Vec<f64>,
}

impl Adan {
    pub fn new(len: usize, config: AdanConfig) -> Self {
        Self {
            config,
            step: 0,
            exp_avg: vec![0.0; len],
            exp_avg_diff: vec![0.0; len],
            exp_avg_sq: vec![0.0; len],
            prev_grad: vec![0.0; len],
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    pub fn len(&self) -> usize {
        self.exp_avg.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exp_avg.is_empty()
    }

    /// One update of `params` in place. `name` labels errors.
    pub fn step(&mut self, name: &'static str, params: &mut [f64], grad: &[f64], lr: f64) -> Result<()> {
        if params.len() != self.len() || grad.len() != self.len() {
            return Err(Error::shape(format!(
                "{name}: {} parameters and {} gradients for an optimizer of size {}",
                params.len(),
                grad.len(),
                self.len()
            )));
        }
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFiniteGradient(name));
        }
        let AdanConfig {
            beta1,
            beta2,
            beta3,
            eps,
        } = self.config;
        self.step += 1;
        if self.step == 1 {
            self.prev_grad.copy_from_slice(grad);
        }
        let t = self.step as i32;
        let bc1 = 1.0 - beta1.powi(t);
        let bc2 = 1.0 - beta2.powi(t);
        let bc3 = 1.0 - beta3.powi(t);
        for i in 0..params.len() {
            let g = grad[i];
            let diff = g - self.prev_grad[i];
            self.exp_avg[i] = beta1 * self.exp_avg[i] + (1.0 - beta1) * g;
            self.exp_avg_diff[i] = beta2 * self.exp_avg_diff[i] + (1.0 - beta2) * diff;
            let u = g + beta2 * diff;
            self.exp_avg_sq[i] = beta3 * self.exp_avg_sq[i] + (1.0 - beta3) * u * u;
            let denom = (self.exp_avg_sq[i] / bc3).sqrt() + eps;
            let update = (self.exp_avg[i] / bc1 + beta2 * self.exp_avg_diff[i] / bc2) / denom;
            params[i] -= lr * update;
            self.prev_grad[i] = g;
        }
        Ok(())
    }
}

/// `lr_min + ½(lr_max − lr_min)(1 + cos(π·step/total))`.
pub fn cosine_lr(step: u64, total_steps: u64, lr_max: f64, lr_min: f64) -> f64 {
    if step >= total_steps {
        return lr_min;
    }
    if step == 0 {
        return lr_max;
    }
    let t = step as f64 / total_steps as f64;
    lr_min + 0.5 * (lr_max - lr_min) * (1.0 + (std::f64::consts::PI * t).cos())
}

/// Learning rates per parameter group. Only positions are annealed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LearningRates {
    pub position: f64,
    pub position_final: f64,
    pub scale: f64,
    pub rotation: f64,
    pub amplitude: f64,
    pub phase: f64,
    pub opacity: f64,
}

impl Default for LearningRates {
    fn default() -> Self {
        Self {
            position: 1e-2,
            position_final: 1e-3,
            scale: 5e-3,
            rotation: 1e-3,
            amplitude: 2.5e-3,
            phase: 2.5e-3,
            opacity: 2.5e-2,
        }
    }
}

impl LearningRates {
    /// Rates in [`GaussianSet::groups`] order at step `step` of `total`.
    pub fn at(&self, step: u64, total: u64) -> [f64; 6] {
        [
            cosine_lr(step, total, self.position, self.position_final),
            self.scale,
            self.rotation,
            self.amplitude,
            self.phase,
            self.opacity,
        ]
    }
}

/// Adan state for all six groups of a [`GaussianSet`].
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianOptimizer {
    rates: LearningRates,
    total_steps: u64,
    groups: Vec<Adan>,
}

impl GaussianOptimizer {
    pub fn new(set: &GaussianSet, rates: LearningRates, config: AdanConfig, total_steps: u64) -> Self {
        let groups = set
            .groups()
            .iter()
            .map(|(_, v)| Adan::new(v.len(), config))
            .collect();
        Self {
            rates,
            total_steps,
            groups,
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.groups[0].steps_taken()
    }

    /// Current learning rates, in group order.
    pub fn learning_rates(&self) -> [f64; 6] {
        self.rates.at(self.steps_taken(), self.total_steps)
    }

    /// Updates `set` in place. Every gradient group is checked for
    /// finiteness before any parameter changes.
    pub fn step(&mut self, set: &mut GaussianSet, grad: &GaussianSet) -> Result<()> {
        for (name, g) in grad.groups() {
            if g.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteGradient(name));
            }
        }
        let lrs = self.learning_rates();
        let grads = grad.groups();
        for (k, (name, params)) in set.groups_mut().into_iter().enumerate() {
            self.groups[k].step(name, params, grads[k].1, lrs[k])?;
        }
        Ok(())
    }
}

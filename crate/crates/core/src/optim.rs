//! AdamW with linear warmup, cosine decay and global-norm clipping.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::to_f32_grid;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub clip_norm: f64,
    /// Fraction of total steps spent in linear warmup.
    pub warmup_fraction: f64,
}

impl Default for OptimConfig {
    fn default() -> Self {
        Self { learning_rate: 1e-4, beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay: 0.0, clip_norm: 1.0, warmup_fraction: 0.02 }
    }
}

impl OptimConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.learning_rate > 0.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.eps > 0.0
            && self.weight_decay >= 0.0
            && self.clip_norm > 0.0
            && (0.0..=1.0).contains(&self.warmup_fraction);
        if ok {
            Ok(())
        } else {
            Err(Error::Config("optimizer settings out of range".into()))
        }
    }

    pub fn warmup_steps(&self, total: u64) -> u64 {
        ((self.warmup_fraction * total as f64).round() as u64).max(1)
    }

    /// Learning rate at 0-based `step` of `total`.
    pub fn lr_at(&self, step: u64, total: u64) -> f64 {
        let warm = self.warmup_steps(total);
        if step < warm {
            return self.learning_rate * (step + 1) as f64 / warm as f64;
        }
        let span = total.saturating_sub(warm).max(1) as f64;
        let t = ((step - warm) as f64 / span).min(1.0);
        0.5 * self.learning_rate * (1.0 + (std::f64::consts::PI * t).cos())
    }
}

/// Adam moment estimates; kept on the f32 grid like the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        Self { m: vec![0.0; n], v: vec![0.0; n] }
    }
}

/// Scale `grads` so the global L2 norm is at most `max_norm`; returns the
/// norm before clipping.
pub fn clip_grad_norm(grads: &mut [f64], max_norm: f64) -> f64 {
    let norm = grads.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm {
        let s = max_norm / norm;
        grads.iter_mut().for_each(|g| *g *= s);
    }
    norm
}

/// One AdamW update at 0-based `step`.
pub fn adamw_step(cfg: &OptimConfig, params: &mut [f64], grads: &[f64], state: &mut AdamState, step: u64, lr: f64) {
    let t = (step + 1) as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    for i in 0..params.len() {
        let g = grads[i];
        let m = to_f32_grid(cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g);
        let v = to_f32_grid(cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g);
        state.m[i] = m;
        state.v[i] = v;
        let update = (m / bc1) / ((v / bc2).sqrt() + cfg.eps) + cfg.weight_decay * params[i];
        params[i] = to_f32_grid(params[i] - lr * update);
    }
}

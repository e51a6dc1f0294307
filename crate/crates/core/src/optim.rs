//! Learning-rate schedule and momentum SGD.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Parameters;

/// Linear warm-up followed by step decay.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LrSchedule {
    pub lr: f64,
    pub warmup_epochs: usize,
    pub decay_epochs: Vec<usize>,
    pub decay_factor: f64,
}

impl LrSchedule {
    pub fn validate(&self, epochs: usize) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::config("lr", "must be positive"));
        }
        if !(self.decay_factor > 0.0 && self.decay_factor.is_finite()) {
            return Err(Error::config("lr_decay_factor", "must be positive"));
        }
        if self.decay_epochs.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::config("lr_decay_epochs", "must be strictly increasing"));
        }
        if let Some(&last) = self.decay_epochs.last() {
            if last >= epochs {
                return Err(Error::config(
                    "lr_decay_epochs",
                    format!("decay epoch {last} is not below the epoch count {epochs}"),
                ));
            }
        }
        Ok(())
    }
}

/// Learning rate for zero-based `epoch`.
pub fn lr_at(s: &LrSchedule, epoch: usize) -> f64 {
    if epoch < s.warmup_epochs {
        return s.lr * (epoch + 1) as f64 / s.warmup_epochs as f64;
    }
    let k = s.decay_epochs.iter().filter(|&&d| d <= epoch).count();
    s.lr * s.decay_factor.powi(k as i32)
}

/// `v' = momentum v + g + wd p`, `p' = p - lr v'`, elementwise.
pub fn sgd_update(params: &mut [f64], grads: &[f64], velocity: &mut [f64], lr: f64, momentum: f64, weight_decay: f64) -> Result<()> {
    if grads.len() != params.len() {
        return Err(Error::shape("gradient", params.len(), grads.len()));
    }
    if velocity.len() != params.len() {
        return Err(Error::shape("velocity", params.len(), velocity.len()));
    }
    for ((p, g), v) in params.iter_mut().zip(grads).zip(velocity.iter_mut()) {
        *v = momentum * *v + g + weight_decay * *p;
        *p -= lr * *v;
    }
    Ok(())
}

/// Momentum SGD over the tensors whose names start with one of `trainable`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sgd {
    pub momentum: f64,
    pub weight_decay: f64,
    pub trainable: Vec<String>,
    /// Learning-rate multipliers by name prefix; first match wins.
    pub lr_scale: Vec<(String, f64)>,
    /// Global-norm clipping threshold over trainable gradients; 0 disables.
    pub clip_norm: f64,
    /// One entry per parameter of the whole model, frozen ones included.
    pub velocity: Vec<f64>,
}

impl Sgd {
    pub fn new(momentum: f64, weight_decay: f64, trainable: &[&str], num_params: usize) -> Self {
        Self {
            momentum,
            weight_decay,
            trainable: trainable.iter().map(|s| s.to_string()).collect(),
            lr_scale: Vec::new(),
            clip_norm: 0.0,
            velocity: vec![0.0; num_params],
        }
    }

    pub fn is_trainable(&self, name: &str) -> bool {
        self.trainable.iter().any(|p| name.starts_with(p.as_str()))
    }

    fn scale_for(&self, name: &str) -> f64 {
        self.lr_scale
            .iter()
            .find(|(p, _)| name.starts_with(p.as_str()))
            .map_or(1.0, |(_, s)| *s)
    }

    /// Global L2 norm of the trainable part of `grads`.
    pub fn grad_norm<P: Parameters>(&self, grads: &P) -> f64 {
        let mut sq = 0.0;
        grads.visit("", &mut |name, t| {
            if self.is_trainable(name) {
                sq += t.iter().map(|g| g * g).sum::<f64>();
            }
        });
        sq.sqrt()
    }

    pub fn step<P: Parameters>(&mut self, params: &mut P, grads: &P, lr: f64) -> Result<()> {
        let g = grads.to_flat();
        if g.len() != self.velocity.len() {
            return Err(Error::shape("velocity", g.len(), self.velocity.len()));
        }
        let norm = self.grad_norm(grads);
        let clip = if self.clip_norm > 0.0 && norm > self.clip_norm {
            self.clip_norm / norm
        } else {
            1.0
        };
        let mut off = 0;
        let (momentum, wd) = (self.momentum, self.weight_decay);
        let this = &*self;
        let rates: Vec<Option<f64>> = {
            let mut v = Vec::new();
            params.visit("", &mut |name, _| v.push(this.is_trainable(name).then(|| lr * this.scale_for(name))));
            v
        };
        let velocity = &mut self.velocity;
        let mut k = 0;
        params.visit_mut("", &mut |_, mut t| {
            let n = t.len();
            if let Some(rate) = rates[k] {
                for (i, p) in t.iter_mut().enumerate() {
                    let v = &mut velocity[off + i];
                    *v = momentum * *v + clip * g[off + i] + wd * *p;
                    *p -= rate * *v;
                }
            }
            off += n;
            k += 1;
        });
        Ok(())
    }
}

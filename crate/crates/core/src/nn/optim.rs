use super::params::ParamStore;
use super::{NnError, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam over every parameter of a [`ParamStore`], using its gradient slots.
#[derive(Debug, Clone)]
pub struct Adam {
    cfg: AdamConfig,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: u64,
}

impl Adam {
    pub fn new(store: &ParamStore, cfg: AdamConfig) -> Self {
        let zeros = || store.ids().map(|id| vec![0.0; store.get(id).len()]).collect();
        Self {
            cfg,
            m: zeros(),
            v: zeros(),
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn step(&mut self, store: &mut ParamStore, lr: f64) {
        self.t += 1;
        let AdamConfig { beta1, beta2, eps } = self.cfg;
        let bc1 = 1.0 - beta1.powi(self.t as i32);
        let bc2 = 1.0 - beta2.powi(self.t as i32);
        for (k, (value, grad)) in store.values_mut().enumerate() {
            let (m, v) = (&mut self.m[k], &mut self.v[k]);
            for (i, (p, &g)) in value.data_mut().iter_mut().zip(grad.data()).enumerate() {
                m[i] = beta1 * m[i] + (1.0 - beta1) * g;
                v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
                let mh = m[i] / bc1;
                let vh = v[i] / bc2;
                *p -= lr * mh / (vh.sqrt() + eps);
            }
        }
    }
}

/// Cosine annealing with warm restarts, evaluated at a fractional epoch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CosineWarmRestarts {
    pub lr_max: f64,
    pub lr_min: f64,
    /// Length of the first cycle in epochs.
    pub t0: f64,
    /// Growth factor of each subsequent cycle.
    pub t_mult: f64,
}

impl Default for CosineWarmRestarts {
    fn default() -> Self {
        Self {
            lr_max: 1e-3,
            lr_min: 1e-5,
            t0: 10.0,
            t_mult: 2.0,
        }
    }
}

impl CosineWarmRestarts {
    pub fn validate(&self) -> Result<()> {
        let ok = self.lr_max.is_finite()
            && self.lr_min >= 0.0
            && self.lr_min <= self.lr_max
            && self.t0 > 0.0
            && self.t_mult >= 1.0;
        if ok {
            Ok(())
        } else {
            Err(NnError::InvalidConfig(format!("invalid schedule {self:?}")))
        }
    }

    /// Learning rate at `epoch` (may be fractional).
    pub fn lr(&self, epoch: f64) -> f64 {
        let (mut start, mut len) = (0.0, self.t0);
        while epoch >= start + len {
            start += len;
            len *= self.t_mult;
        }
        let frac = (epoch - start) / len;
        self.lr_min + 0.5 * (self.lr_max - self.lr_min) * (1.0 + (std::f64::consts::PI * frac).cos())
    }

    /// Epochs at which a new cycle begins, up to `horizon`.
    pub fn restarts(&self, horizon: f64) -> Vec<f64> {
        let (mut start, mut len) = (self.t0, self.t0 * self.t_mult);
        let mut out = Vec::new();
        while start <= horizon {
            out.push(start);
            start += len;
            len *= self.t_mult;
        }
        out
    }
}

use crate::graph::GraphConfig;
use crate::nn::{AdamConfig, CosineWarmRestarts};
use crate::safety::SafetyConfig;
use crate::scene::{DEFAULT_DT, DEFAULT_FUTURE_S, DEFAULT_HISTORY_S};
use serde::{Deserialize, Serialize};

/// Branch toggles used for ablations. All enabled is the full model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Ablation {
    pub qsa: bool,
    pub dbp: bool,
    pub priority: bool,
    /// When false, neighbors are removed before featurization.
    pub interaction: bool,
    /// When false, a single mode is predicted.
    pub multimodal: bool,
}

impl Default for Ablation {
    fn default() -> Self {
        Self {
            qsa: true,
            dbp: true,
            priority: true,
            interaction: true,
            multimodal: true,
        }
    }
}

/// How pairwise priority vectors are reduced to one row per frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PairReduction {
    #[default]
    Nearest,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub width: usize,
    pub heads: usize,
    pub modes: usize,
    pub gcn_layers: usize,
    pub norm_groups: usize,
    pub dt: f64,
    pub t_h: f64,
    pub t_f: f64,
    pub ablation: Ablation,
    pub pair_reduction: PairReduction,
    pub safety: SafetyConfig,
    pub graph: GraphConfig,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            width: 64,
            heads: 4,
            modes: 6,
            gcn_layers: 2,
            norm_groups: 4,
            dt: DEFAULT_DT,
            t_h: DEFAULT_HISTORY_S,
            t_f: DEFAULT_FUTURE_S,
            ablation: Ablation::default(),
            pair_reduction: PairReduction::Nearest,
            safety: SafetyConfig::default(),
            graph: GraphConfig::default(),
        }
    }
}

impl ModelConfig {
    /// Narrow configuration for single-core runs.
    pub fn desk() -> Self {
        Self {
            width: 32,
            ..Self::default()
        }
    }

    pub fn effective_modes(&self) -> usize {
        if self.ablation.multimodal {
            self.modes
        } else {
            1
        }
    }

    /// Every violated constraint, or an empty list.
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if self.width == 0 {
            v.push("width must be positive".to_string());
        }
        if self.heads == 0 || self.width % self.heads != 0 {
            v.push(format!("width {} must be divisible by heads {}", self.width, self.heads));
        }
        if self.heads != 0 && (3 * self.width) % self.heads != 0 {
            v.push(format!("fused width {} must be divisible by heads {}", 3 * self.width, self.heads));
        }
        if self.modes == 0 {
            v.push("modes must be at least 1".to_string());
        }
        if self.gcn_layers == 0 {
            v.push("gcn_layers must be at least 1".to_string());
        }
        if self.norm_groups == 0 || self.width % self.norm_groups != 0 {
            v.push(format!("width {} must be divisible by norm_groups {}", self.width, self.norm_groups));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            v.push(format!("dt must be positive, got {}", self.dt));
        }
        for (name, secs) in [("t_h", self.t_h), ("t_f", self.t_f)] {
            match crate::scene::frames_for(secs, self.dt) {
                Ok(n) if n >= 2 => {}
                _ => v.push(format!("{name} = {secs} s must be at least two whole frames of dt")),
            }
        }
        if let Err(e) = self.safety.validate() {
            v.push(e.to_string());
        }
        if !(self.graph.radius > 0.0 && self.graph.radius.is_finite()) {
            v.push(format!("radius must be positive, got {}", self.graph.radius));
        }
        v
    }

    pub fn history_frames(&self) -> usize {
        crate::scene::frames_for(self.t_h, self.dt).unwrap_or(0)
    }

    pub fn future_frames(&self) -> usize {
        crate::scene::frames_for(self.t_f, self.dt).unwrap_or(0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub schedule: CosineWarmRestarts,
    pub adam: AdamConfig,
    /// Global gradient-norm clip; `None` disables clipping.
    pub grad_clip: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            batch_size: 64,
            seed: 0,
            schedule: CosineWarmRestarts::default(),
            adam: AdamConfig::default(),
            grad_clip: Some(10.0),
        }
    }
}

impl TrainConfig {
    /// Per-sample updates under one cosine cycle spanning all epochs.
    pub fn desk(epochs: usize) -> Self {
        Self {
            epochs,
            batch_size: 1,
            schedule: CosineWarmRestarts {
                lr_max: 5e-4,
                t0: epochs.max(1) as f64,
                t_mult: 1.0,
                ..CosineWarmRestarts::default()
            },
            ..Self::default()
        }
    }

    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if self.epochs == 0 {
            v.push("epochs must be at least 1".to_string());
        }
        if self.batch_size == 0 {
            v.push("batch_size must be at least 1".to_string());
        }
        if let Err(e) = self.schedule.validate() {
            v.push(e.to_string());
        }
        if let Some(c) = self.grad_clip {
            if !(c > 0.0) {
                v.push(format!("grad_clip must be positive, got {c}"));
            }
        }
        v
    }
}

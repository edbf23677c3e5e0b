//! The trajectory model: featurization, the three encoders, Leanformer
//! fusion, the mixture decoder, the multitask loss and training.

pub mod config;
pub mod features;
pub mod loss;
mod network;
pub mod train;

pub use config::{Ablation, ModelConfig, PairReduction, TrainConfig};
pub use features::{canonical_window, compute_priority_vectors, featurize, SceneFeatures};
pub use loss::{LossReport, LossVars};
pub use network::ForwardVars;
pub use train::{train, write_curve_csv, EpochLog, TrainOutcome};

use crate::geom::Vec2;
use crate::nn::{checkpoint, Graph, NnError, ParamStore, Tensor, Var};
use network::Net;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("invalid configuration: {}", .0.join("; "))]
    InvalidConfig(Vec<String>),
    #[error("features: {0}")]
    Features(String),
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("window has no ground-truth future")]
    MissingFuture,
    #[error(transparent)]
    Scene(#[from] crate::scene::SceneError),
    #[error(transparent)]
    Safety(#[from] crate::safety::SafetyError),
    #[error(transparent)]
    Graph(#[from] crate::graph::GraphError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("checkpoint metadata: {0}")]
    Meta(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, ModelError>;

/// One candidate future of the target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mode {
    /// Absolute predicted positions, one per future frame.
    pub positions: Vec<Vec2>,
    /// Per-frame standard deviations `[σx, σy]` after clamping.
    pub sigma: Vec<[f64; 2]>,
    pub rho: Vec<f64>,
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionSet {
    pub target_id: u64,
    pub anchor: Vec2,
    pub dt: f64,
    pub modes: Vec<Mode>,
}

impl PredictionSet {
    /// Highest-confidence mode, first on ties.
    pub fn best_mode(&self) -> &Mode {
        let c: Vec<f64> = self.modes.iter().map(|m| m.confidence).collect();
        &self.modes[loss::argmax(&c)]
    }

    pub fn confidence_sum(&self) -> f64 {
        self.modes.iter().map(|m| m.confidence).sum()
    }
}

#[derive(Debug, Clone)]
pub struct Model {
    pub config: ModelConfig,
    pub store: ParamStore,
    net: Net,
}

impl Model {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        let v = config.violations();
        if !v.is_empty() {
            return Err(ModelError::InvalidConfig(v));
        }
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = Net::new(&config, &mut store, &mut rng)?;
        Ok(Self { config, store, net })
    }

    pub fn featurize(&self, window: &crate::scene::SceneWindow) -> Result<SceneFeatures> {
        featurize(window, &self.config)
    }

    /// Records a forward pass in `g`, which must be bound to `self.store`.
    pub fn forward(&self, g: &mut Graph, f: &SceneFeatures) -> Result<ForwardVars> {
        self.net.forward(&self.config, g, f)
    }

    /// Task-weight parameters `[s_rmse, s_nll]` bound in `g`.
    pub fn task_weights(&self, g: &mut Graph) -> [Var; 2] {
        [g.param(self.net.s_rmse), g.param(self.net.s_nll)]
    }

    /// Records forward pass and loss against the window's ground truth.
    pub fn loss(&self, g: &mut Graph, f: &SceneFeatures) -> Result<(LossVars, [Var; 2])> {
        let truth = f.future.as_ref().ok_or(ModelError::MissingFuture)?;
        let fv = self.forward(g, f)?;
        let [s1, s2] = self.task_weights(g);
        Ok((loss::loss_vars(g, &fv, truth, s1, s2)?, [s1, s2]))
    }

    pub fn loss_report(&self, f: &SceneFeatures) -> Result<LossReport> {
        let mut g = Graph::with_params(&self.store);
        let (v, [s1, s2]) = self.loss(&mut g, f)?;
        Ok(LossReport::from_vars(&g, &v, s1, s2))
    }

    /// Loss and parameter gradients (in store order) for one window.
    pub fn gradients(&self, f: &SceneFeatures) -> Result<(LossReport, Vec<Tensor>)> {
        let mut g = Graph::with_params(&self.store);
        let (v, [s1, s2]) = self.loss(&mut g, f)?;
        let report = LossReport::from_vars(&g, &v, s1, s2);
        let grads = g.backward(v.total)?;
        Ok((report, g.param_grads(&grads)))
    }

    pub fn predict(&self, f: &SceneFeatures) -> Result<PredictionSet> {
        let mut g = Graph::with_params(&self.store);
        let fv = self.forward(&mut g, f)?;
        let conf = g.value(fv.conf).data().to_vec();
        let modes = (0..fv.means.len())
            .map(|k| {
                let mean = g.value(fv.means[k]);
                let ls = g.value(fv.log_sigma[k]);
                Mode {
                    positions: (0..mean.rows())
                        .map(|t| f.anchor + Vec2::new(mean.at(t, 0), mean.at(t, 1)))
                        .collect(),
                    sigma: (0..ls.rows())
                        .map(|t| [ls.at(t, 0).exp().max(loss::SIGMA_MIN), ls.at(t, 1).exp().max(loss::SIGMA_MIN)])
                        .collect(),
                    rho: g.value(fv.rho[k]).data().to_vec(),
                    confidence: conf[k],
                }
            })
            .collect();
        Ok(PredictionSet {
            target_id: f.agent_ids[0],
            anchor: f.anchor,
            dt: f.dt,
            modes,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let meta = serde_json::to_string(&self.config)?;
        checkpoint::save(path, &self.store, &meta)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (meta, store) = checkpoint::load(path)?;
        let config: ModelConfig = serde_json::from_str(&meta)?;
        let mut model = Self::new(config, 0)?;
        model.store.load_from(&store)?;
        Ok(model)
    }
}

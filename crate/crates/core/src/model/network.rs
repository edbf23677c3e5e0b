//! Encoders, fusion block and mixture decoder.

use super::config::ModelConfig;
use super::features::{SceneFeatures, LATERAL_SPEED_SCALE, PRIORITY_WIDTH, SPEED_SCALE};
use super::Result;
use crate::graph::BehaviorIndices;
use crate::nn::{Dense, GcnLayer, Glu, Graph, Lstm, Mlp, MultiHeadAttention, Norm, ParamId, ParamStore, Tensor, Var};
use crate::safety::RiskFeatures;
use rand_chacha::ChaCha8Rng;

/// Upper bound on |ρ| of each Gaussian component.
pub const RHO_BOUND: f64 = 0.99;

/// Residual self-attention, then `LN(a + MLP(GLU(a)))`.
#[derive(Debug, Clone)]
struct SeqHead {
    attn: MultiHeadAttention,
    glu: Glu,
    mlp: Mlp,
    norm: Norm,
}

impl SeqHead {
    fn new(store: &mut ParamStore, prefix: &str, w: usize, heads: usize, rng: &mut ChaCha8Rng) -> Result<Self> {
        Ok(Self {
            attn: MultiHeadAttention::new(store, &format!("{prefix}.attn"), w, heads, rng)?,
            glu: Glu::new(store, &format!("{prefix}.glu"), w, w, rng)?,
            mlp: Mlp::new(store, &format!("{prefix}.mlp"), w, w, w, rng)?,
            norm: Norm::layer(store, &format!("{prefix}.ln"), w)?,
        })
    }

    fn forward(&self, g: &mut Graph, x: Var) -> Result<Var> {
        let a = self.attn.forward(g, x)?;
        let a = g.add(x, a)?;
        let y = self.glu.forward(g, a)?;
        let y = self.mlp.forward(g, y)?;
        let y = g.add(a, y)?;
        Ok(self.norm.forward(g, y)?)
    }
}

#[derive(Debug, Clone)]
struct Qsa {
    gcn: Vec<GcnLayer>,
    head: SeqHead,
}

impl Qsa {
    /// Per-frame GCN over agents, then the target row of every frame.
    fn node_features(&self, g: &mut Graph, f: &SceneFeatures) -> Result<Var> {
        let n = f.n_agents();
        let mut z = g.constant(f.stacked_nodes());
        let a = g.constant(f.block_adjacency());
        for layer in &self.gcn {
            z = layer.forward(g, z, a)?;
        }
        let mut select = Tensor::zeros(f.t_h, f.t_h * n);
        for k in 0..f.t_h {
            select.data_mut()[k * f.t_h * n + k * n] = 1.0;
        }
        let select = g.constant(select);
        Ok(g.matmul(select, z)?)
    }

    fn forward(&self, g: &mut Graph, f: &SceneFeatures) -> Result<Var> {
        let z = self.node_features(g, f)?;
        self.head.forward(g, z)
    }
}

#[derive(Debug, Clone)]
struct Dbp {
    embed_behavior: Dense,
    embed_safety: Dense,
    lstm: Lstm,
    head: SeqHead,
}

impl Dbp {
    fn forward(&self, g: &mut Graph, f: &SceneFeatures, safety: Var) -> Result<Var> {
        let b = g.constant(f.behavior.clone());
        let b = self.embed_behavior.forward(g, b)?;
        let b = g.relu(b);
        let s = self.embed_safety.forward(g, safety)?;
        let s = g.relu(s);
        let x = g.concat_cols(&[b, s])?;
        let h = self.lstm.sequence(g, x)?;
        self.head.forward(g, h)
    }
}

#[derive(Debug, Clone)]
struct Priority {
    lstm: Lstm,
    head: SeqHead,
}

impl Priority {
    fn forward(&self, g: &mut Graph, f: &SceneFeatures) -> Result<Var> {
        let x = g.constant(f.priority.clone());
        let h = self.lstm.sequence(g, x)?;
        self.head.forward(g, h)
    }
}

/// One pre-norm transformer block over the fused branch features.
#[derive(Debug, Clone)]
struct Leanformer {
    norm1: Norm,
    attn: MultiHeadAttention,
    norm2: Norm,
    mlp: Mlp,
    project: Dense,
}

impl Leanformer {
    fn forward(&self, g: &mut Graph, x: Var) -> Result<Var> {
        let n = self.norm1.forward(g, x)?;
        let a = self.attn.forward(g, n)?;
        let x = g.add(x, a)?;
        let n = self.norm2.forward(g, x)?;
        let m = self.mlp.forward(g, n)?;
        let x = g.add(x, m)?;
        Ok(self.project.forward(g, x)?)
    }
}

/// `ReLU(Dense(GroupNorm(LSTM(x))))`; the same stage is applied twice.
#[derive(Debug, Clone)]
struct DecoderStage {
    lstm: Lstm,
    norm: Norm,
    dense: Dense,
}

impl DecoderStage {
    /// Runs from `state` (zero when `None`) and returns the output with the final LSTM state.
    fn forward(&self, g: &mut Graph, x: Var, state: Option<(Var, Var)>) -> Result<(Var, (Var, Var))> {
        let (h0, c0) = match state {
            Some(s) => s,
            None => {
                let z = Tensor::zeros(1, self.lstm.hidden);
                (g.constant(z.clone()), g.constant(z))
            }
        };
        let (h, hl, cl) = self.lstm.sequence_from(g, x, h0, c0)?;
        let h = self.norm.forward(g, h)?;
        let h = self.dense.forward(g, h)?;
        Ok((g.relu(h), (hl, cl)))
    }
}

/// Graph handles of one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardVars {
    /// Per mode, t_f × 2 mean offsets from the anchor.
    pub means: Vec<Var>,
    /// Per mode, t_f × 2 log standard deviations.
    pub log_sigma: Vec<Var>,
    /// Per mode, t_f × 1 correlations.
    pub rho: Vec<Var>,
    /// 1 × M log confidences.
    pub log_conf: Var,
    /// 1 × M confidences.
    pub conf: Var,
    pub branches: [Var; 3],
    pub fused: Var,
}

#[derive(Debug, Clone)]
pub(crate) struct Net {
    qsa: Qsa,
    dbp: Dbp,
    priority: Priority,
    leanformer: Leanformer,
    decoder: DecoderStage,
    trajectory: Dense,
    confidence: Dense,
    pub s_rmse: ParamId,
    pub s_nll: ParamId,
}

impl Net {
    pub fn new(cfg: &ModelConfig, store: &mut ParamStore, rng: &mut ChaCha8Rng) -> Result<Self> {
        let w = cfg.width;
        let h = cfg.heads;
        let m = cfg.effective_modes();
        let mut gcn = Vec::with_capacity(cfg.gcn_layers);
        for l in 0..cfg.gcn_layers {
            let input = if l == 0 { RiskFeatures::WIDTH } else { w };
            gcn.push(GcnLayer::new(store, &format!("qsa.gcn{l}"), input, w, rng)?);
        }
        let qsa = Qsa {
            gcn,
            head: SeqHead::new(store, "qsa", w, h, rng)?,
        };
        let dbp = Dbp {
            embed_behavior: Dense::new(store, "dbp.embed_j", BehaviorIndices::WIDTH, w, rng)?,
            embed_safety: Dense::new(store, "dbp.embed_s", w, w, rng)?,
            lstm: Lstm::new(store, "dbp.lstm", 2 * w, w, rng)?,
            head: SeqHead::new(store, "dbp", w, h, rng)?,
        };
        let priority = Priority {
            lstm: Lstm::new(store, "pri.lstm", PRIORITY_WIDTH, w, rng)?,
            head: SeqHead::new(store, "pri", w, h, rng)?,
        };
        let leanformer = Leanformer {
            norm1: Norm::layer(store, "lean.ln1", 3 * w)?,
            attn: MultiHeadAttention::new(store, "lean.attn", 3 * w, h, rng)?,
            norm2: Norm::layer(store, "lean.ln2", 3 * w)?,
            mlp: Mlp::new(store, "lean.mlp", 3 * w, 3 * w, 3 * w, rng)?,
            project: Dense::new(store, "lean.proj", 3 * w, w, rng)?,
        };
        let decoder = DecoderStage {
            lstm: Lstm::new(store, "dec.lstm", w, w, rng)?,
            norm: Norm::group(store, "dec.gn", w, cfg.norm_groups)?,
            dense: Dense::new(store, "dec.fc", w, w, rng)?,
        };
        Ok(Self {
            qsa,
            dbp,
            priority,
            leanformer,
            decoder,
            trajectory: Dense::new(store, "head.traj", w, 5 * m, rng)?,
            confidence: Dense::new(store, "head.conf", w, m, rng)?,
            s_rmse: store.add_filled("task.s_rmse", 1, 1, 0.0)?,
            s_nll: store.add_filled("task.s_nll", 1, 1, 0.0)?,
        })
    }

    /// Target rows of the per-frame GCN stack, before attention.
    #[cfg(test)]
    pub fn qsa_node_features(&self, g: &mut Graph, f: &SceneFeatures) -> Result<Var> {
        self.qsa.node_features(g, f)
    }

    pub fn forward(&self, cfg: &ModelConfig, g: &mut Graph, f: &SceneFeatures) -> Result<ForwardVars> {
        let w = cfg.width;
        let zeros = |g: &mut Graph| g.constant(Tensor::zeros(f.t_h, w));
        let safety = if cfg.ablation.qsa { self.qsa.forward(g, f)? } else { zeros(g) };
        let behavior = if cfg.ablation.dbp {
            self.dbp.forward(g, f, safety)?
        } else {
            zeros(g)
        };
        let priority = if cfg.ablation.priority {
            self.priority.forward(g, f)?
        } else {
            zeros(g)
        };
        let cat = g.concat_cols(&[safety, behavior, priority])?;
        let fused = self.leanformer.forward(g, cat)?;

        let (stage1, state) = self.decoder.forward(g, fused, None)?;
        let last = g.row(stage1, f.t_h - 1)?;
        let repeated = g.broadcast_rows(last, f.t_f)?;
        let (stage2, _) = self.decoder.forward(g, repeated, Some(state))?;

        let heads = self.trajectory.forward(g, stage2)?;
        let mut cumulative = Tensor::zeros(f.t_f, f.t_f);
        for i in 0..f.t_f {
            for j in 0..=i {
                cumulative.data_mut()[i * f.t_f + j] = f.dt;
            }
        }
        let cumulative = g.constant(cumulative);
        let axis_scale = g.constant(Tensor::row_vector(&[SPEED_SCALE, LATERAL_SPEED_SCALE]));
        let m = cfg.effective_modes();
        let (mut means, mut log_sigma, mut rho) = (Vec::with_capacity(m), Vec::with_capacity(m), Vec::with_capacity(m));
        for k in 0..m {
            let velocity = g.slice_cols(heads, 5 * k, 2)?;
            let inc = g.mul_row(velocity, axis_scale)?;
            means.push(g.matmul(cumulative, inc)?);
            log_sigma.push(g.slice_cols(heads, 5 * k + 2, 2)?);
            let r = g.slice_cols(heads, 5 * k + 4, 1)?;
            let r = g.tanh(r);
            rho.push(g.scale(r, RHO_BOUND));
        }
        let logits = self.confidence.forward(g, last)?;
        let log_conf = g.log_softmax(logits);
        let conf = g.softmax(logits);
        Ok(ForwardVars {
            means,
            log_sigma,
            rho,
            log_conf,
            conf,
            branches: [safety, behavior, priority],
            fused,
        })
    }
}

//! Conversion of a [`SceneWindow`] into the numeric inputs of the network.

use super::config::ModelConfig;
use super::{ModelError, Result};
use crate::geom::Vec2;
use crate::graph::{behavior_indices, build_graph, centrality_series, BehaviorIndices};
use crate::nn::{normalized_adjacency, Tensor};
use crate::safety::{risk_features, RiskFeatures};
use crate::scene::{AgentState, SceneWindow};
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;

/// Width of one priority row: scaled S, scaled P, and a neighbor-present flag.
pub const PRIORITY_WIDTH: usize = 13;
/// Longitudinal (x) speed scale (m/s) for positional deltas and outputs.
pub const SPEED_SCALE: f64 = 10.0;
/// Lateral (y) speed scale (m/s) for positional deltas and outputs.
pub const LATERAL_SPEED_SCALE: f64 = 1.0;
/// Acceleration scale (m/s²) applied to velocity deltas and accelerations.
pub const ACCEL_SCALE: f64 = 5.0;
/// Distance scale (m) applied to relative positions.
pub const DISTANCE_SCALE: f64 = 10.0;

/// Everything the network consumes for one window, with agents in canonical order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneFeatures {
    pub t_h: usize,
    pub t_f: usize,
    pub dt: f64,
    pub agent_ids: Vec<u64>,
    pub anchor: Vec2,
    /// Per frame, one row of scaled risk criteria per agent (n × 5).
    pub nodes: Vec<Tensor>,
    /// Per frame, the normalized proximity adjacency (n × n).
    pub adjacency: Vec<Tensor>,
    /// Target behavior indices (t_h × 18), signed-log compressed.
    pub behavior: Tensor,
    /// Target priority rows (t_h × [`PRIORITY_WIDTH`]).
    pub priority: Tensor,
    /// Ground-truth future of the target relative to `anchor`, if available.
    pub future: Option<Vec<Vec2>>,
}

impl SceneFeatures {
    pub fn n_agents(&self) -> usize {
        self.agent_ids.len()
    }

    /// Node features of all frames stacked frame-major ((t_h·n) × 5).
    pub fn stacked_nodes(&self) -> Tensor {
        let rows: Vec<&[f64]> = self.nodes.iter().flat_map(|t| (0..t.rows()).map(move |r| t.row(r))).collect();
        Tensor::from_rows(&rows).expect("uniform width")
    }

    /// Block-diagonal adjacency over all frames.
    pub fn block_adjacency(&self) -> Tensor {
        let n = self.n_agents();
        let size = n * self.t_h;
        let mut out = Tensor::zeros(size, size);
        for (k, a) in self.adjacency.iter().enumerate() {
            for i in 0..n {
                for j in 0..n {
                    out.data_mut()[(k * n + i) * size + k * n + j] = a.at(i, j);
                }
            }
        }
        out
    }
}

fn state_key(s: &AgentState) -> [f64; 6] {
    [s.p.x, s.p.y, s.v.x, s.v.y, s.a.x, s.a.y]
}

fn lex_cmp(a: &[f64], b: &[f64]) -> Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(Ordering::Equal)
}

fn history_cmp(a: &[AgentState], b: &[AgentState]) -> Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| lex_cmp(&state_key(x), &state_key(y)))
        .find(|o| o.is_ne())
        .unwrap_or(Ordering::Equal)
}

/// Reorders agents as target first, then neighbors by their history
/// kinematics, so agent ids and input order never affect the features.
pub fn canonical_window(window: &SceneWindow) -> SceneWindow {
    let mut order: Vec<usize> = (0..window.agents.len()).filter(|&i| i != window.target_index).collect();
    order.sort_by(|&a, &b| history_cmp(window.history(a), window.history(b)));
    let mut agents = vec![window.target().clone()];
    agents.extend(order.into_iter().map(|i| window.agents[i].clone()));
    SceneWindow {
        target_index: 0,
        agents,
        ..window.clone()
    }
}

/// Target-only copy of the window.
pub fn without_neighbors(window: &SceneWindow) -> SceneWindow {
    SceneWindow {
        target_index: 0,
        agents: vec![window.target().clone()],
        ..window.clone()
    }
}

/// Relative kinematics of agent `i` with respect to `j`.
fn pair_delta(i: &AgentState, j: &AgentState) -> [f64; 6] {
    let (dp, dv, da) = (i.p - j.p, i.v - j.v, i.a - j.a);
    [dp.x, dp.y, dv.x, dv.y, da.x, da.y]
}

/// Frame-to-frame deltas `S` of the target (one row per history frame after
/// the first) and the pairwise deltas `P` to the nearest neighbor per frame
/// (`None` without neighbors).
pub fn compute_priority_vectors(window: &SceneWindow) -> Result<(Vec<[f64; 6]>, Vec<Option<[f64; 6]>>)> {
    if window.t_h_frames < 2 {
        return Err(ModelError::Features("priority vectors need at least two history frames".into()));
    }
    let hist = window.history(window.target_index);
    let s = hist.windows(2).map(|w| pair_delta(&w[1], &w[0])).collect();
    let p = (0..window.t_h_frames)
        .map(|k| {
            let me = &hist[k];
            (0..window.agents.len())
                .filter(|&j| j != window.target_index)
                .map(|j| pair_delta(me, &window.agents[j].states[k]))
                .min_by(|a, b| {
                    let da = a[0] * a[0] + a[1] * a[1];
                    let db = b[0] * b[0] + b[1] * b[1];
                    da.total_cmp(&db).then_with(|| lex_cmp(a, b))
                })
        })
        .collect();
    Ok((s, p))
}

fn signed_log1p(x: f64) -> f64 {
    x.signum() * x.abs().ln_1p()
}

fn scaled_risk(f: &RiskFeatures, cfg: &ModelConfig) -> [f64; RiskFeatures::WIDTH] {
    let raw = f.to_array(&cfg.safety);
    let star = cfg.safety.ttc_star;
    [
        raw[0] / (star + 1.0),
        raw[1] / cfg.t_h,
        raw[2] / (star * cfg.t_h),
        raw[3],
        raw[4],
    ]
}

/// Builds [`SceneFeatures`] for a repaired window.
pub fn featurize(window: &SceneWindow, cfg: &ModelConfig) -> Result<SceneFeatures> {
    window.validate()?;
    let t_h = window.t_h_frames;
    if t_h != cfg.history_frames() || window.t_f_frames != cfg.future_frames() {
        return Err(ModelError::Features(format!(
            "window has {}+{} frames, model expects {}+{}",
            t_h,
            window.t_f_frames,
            cfg.history_frames(),
            cfg.future_frames()
        )));
    }
    if (window.dt - cfg.dt).abs() > 1e-12 {
        return Err(ModelError::Features(format!("window dt {} differs from model dt {}", window.dt, cfg.dt)));
    }
    let w = if cfg.ablation.interaction {
        canonical_window(window)
    } else {
        without_neighbors(window)
    };
    let n = w.agents.len();

    let risk: Vec<Vec<RiskFeatures>> = (0..n)
        .map(|a| risk_features(&w, a, &cfg.safety))
        .collect::<std::result::Result<_, _>>()?;
    let mut nodes = Vec::with_capacity(t_h);
    let mut adjacency = Vec::with_capacity(t_h);
    for k in 0..t_h {
        let rows: Vec<[f64; 5]> = risk.iter().map(|r| scaled_risk(&r[k], cfg)).collect();
        nodes.push(Tensor::from_rows(&rows)?);
        let positions: Vec<Vec2> = w.agents.iter().map(|t| t.states[k].p).collect();
        let g = build_graph(&positions, cfg.graph.radius)?;
        adjacency.push(normalized_adjacency(&g.adjacency, n)?);
    }

    let series = centrality_series(&w, &cfg.graph)?;
    let target_series: Vec<[f64; 6]> = series.iter().map(|frame| frame[0].to_array()).collect();
    let indices = behavior_indices(&target_series, w.dt)?;
    let behavior_rows: Vec<[f64; BehaviorIndices::WIDTH]> =
        indices.iter().map(|b| b.to_array().map(signed_log1p)).collect();

    let (s, p) = compute_priority_vectors(&w)?;
    let dt = w.dt;
    let mut priority_rows = Vec::with_capacity(t_h);
    for k in 0..t_h {
        let mut row = [0.0; PRIORITY_WIDTH];
        if k > 0 {
            let d = s[k - 1];
            row[0] = d[0] / (dt * SPEED_SCALE);
            row[1] = d[1] / (dt * LATERAL_SPEED_SCALE);
            for c in 2..6 {
                row[c] = d[c] / (dt * ACCEL_SCALE);
            }
        }
        if let Some(q) = p[k] {
            row[6] = q[0] / DISTANCE_SCALE;
            row[7] = q[1] / DISTANCE_SCALE;
            row[8] = q[2] / SPEED_SCALE;
            row[9] = q[3] / LATERAL_SPEED_SCALE;
            row[10] = q[4] / ACCEL_SCALE;
            row[11] = q[5] / ACCEL_SCALE;
            row[12] = 1.0;
        }
        priority_rows.push(row);
    }

    let anchor = w.anchor();
    let future = w
        .target_future()
        .map(|f| f.iter().map(|s| s.p - anchor).collect());

    Ok(SceneFeatures {
        t_h,
        t_f: w.t_f_frames,
        dt,
        agent_ids: w.agents.iter().map(|t| t.agent_id).collect(),
        anchor,
        nodes,
        adjacency,
        behavior: Tensor::from_rows(&behavior_rows)?,
        priority: Tensor::from_rows(&priority_rows)?,
        future,
    })
}

//! Closed-form surrogate safety measures.
//!
//! All pairwise quantities use differences `Δ = agent_i − agent_j`. TTC is
//! only defined for closing pairs; everything else maps to [`Ttc::NoApproach`].

use crate::geom::Vec2;
use crate::scene::{AgentState, SceneWindow};
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SafetyError {
    #[error("coincident positions: time-to-collision is undefined")]
    CollisionStateUndefined,
    #[error("empty TTC series")]
    EmptySeries,
    #[error("invalid safety config: {0}")]
    InvalidConfig(String),
    #[error("agent index {0} out of range")]
    AgentOutOfRange(usize),
}

pub type Result<T> = std::result::Result<T, SafetyError>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SafetyConfig {
    /// Critical TTC threshold (s).
    pub ttc_star: f64,
    /// Time step of the TET/TIT switching sum (s).
    pub tau_sc: f64,
}

impl Default for SafetyConfig {
    fn default() -> Self {
        Self {
            ttc_star: 3.0,
            tau_sc: 0.1,
        }
    }
}

impl SafetyConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.ttc_star > 0.0 && self.ttc_star.is_finite()) {
            return Err(SafetyError::InvalidConfig(format!("ttc_star must be > 0, got {}", self.ttc_star)));
        }
        if !(self.tau_sc > 0.0 && self.tau_sc.is_finite()) {
            return Err(SafetyError::InvalidConfig(format!("tau_sc must be > 0, got {}", self.tau_sc)));
        }
        Ok(())
    }
}

/// Relative kinematics of an ordered agent pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairKinematics {
    pub dp: Vec2,
    pub dv: Vec2,
    pub da: Vec2,
}

impl PairKinematics {
    pub fn new(dp: Vec2, dv: Vec2, da: Vec2) -> Self {
        Self { dp, dv, da }
    }

    pub fn between(i: &AgentState, j: &AgentState) -> Self {
        Self {
            dp: i.p - j.p,
            dv: i.v - j.v,
            da: i.a - j.a,
        }
    }

    pub fn swapped(self) -> Self {
        Self {
            dp: -self.dp,
            dv: -self.dv,
            da: -self.da,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ttc {
    Seconds(f64),
    /// Separating or parallel pair.
    NoApproach,
}

impl Ttc {
    pub fn seconds(self) -> Option<f64> {
        match self {
            Ttc::Seconds(s) => Some(s),
            Ttc::NoApproach => None,
        }
    }

    pub fn is_critical(self, cfg: &SafetyConfig) -> bool {
        matches!(self, Ttc::Seconds(s) if (0.0..=cfg.ttc_star).contains(&s))
    }

    /// Bounded numeric encoding for network inputs: NoApproach becomes `TTC* + 1`.
    pub fn encoded(self, cfg: &SafetyConfig) -> f64 {
        match self {
            Ttc::Seconds(s) => s.min(cfg.ttc_star + 1.0),
            Ttc::NoApproach => cfg.ttc_star + 1.0,
        }
    }

    /// Total order with NoApproach after every finite value.
    fn order_key(self) -> f64 {
        self.seconds().unwrap_or(f64::INFINITY)
    }
}

/// Time-to-collision `−d/ḋ` with `ḋ = Δpᵀ Δv / d`.
pub fn ttc(pair: &PairKinematics) -> Result<Ttc> {
    let d = pair.dp.norm();
    if d == 0.0 {
        return Err(SafetyError::CollisionStateUndefined);
    }
    let d_dot = pair.dp.dot(pair.dv) / d;
    if d_dot < 0.0 {
        Ok(Ttc::Seconds(-d / d_dot))
    } else {
        Ok(Ttc::NoApproach)
    }
}

/// Time exposed: `τ_sc` per frame with `0 ≤ TTC ≤ TTC*`.
pub fn tet(series: &[Ttc], cfg: &SafetyConfig) -> Result<f64> {
    if series.is_empty() {
        return Err(SafetyError::EmptySeries);
    }
    let critical = series.iter().filter(|t| t.is_critical(cfg)).count();
    Ok(critical as f64 * cfg.tau_sc)
}

/// Time integrated: `Σ (TTC* − TTC)·τ_sc` over the same critical frames as [`tet`].
pub fn tit(series: &[Ttc], cfg: &SafetyConfig) -> Result<f64> {
    if series.is_empty() {
        return Err(SafetyError::EmptySeries);
    }
    Ok(series
        .iter()
        .filter(|t| t.is_critical(cfg))
        .filter_map(|t| t.seconds())
        .map(|s| (cfg.ttc_star - s) * cfg.tau_sc)
        .sum())
}

fn closing_proxy(rate: Vec2, dp: Vec2) -> f64 {
    let denom = rate.norm_sq();
    if denom == 0.0 {
        return 0.0;
    }
    -(rate.x * dp.x + rate.y * dp.y) / denom
}

fn exp_branch(q: f64) -> f64 {
    if q > 0.0 {
        (-q).exp()
    } else {
        0.0
    }
}

/// Velocity closing-time proxy `q = max(−Δv·Δp / |Δv|², 0)`; zero for `Δv = 0`.
pub fn risk_q(pair: &PairKinematics) -> f64 {
    closing_proxy(pair.dv, pair.dp).max(0.0)
}

/// Acceleration analogue `q̇ = −Δa·Δp / |Δa|²` (signed); zero for `Δa = 0`.
pub fn risk_q_dot(pair: &PairKinematics) -> f64 {
    closing_proxy(pair.da, pair.dp)
}

/// Subjective risk perception: `e^{−q}` for `q > 0`, else 0.
pub fn spr(pair: &PairKinematics) -> f64 {
    exp_branch(risk_q(pair))
}

/// Dynamic risk volatility: `e^{−q̇}` for `q̇ > 0`, else 0 (negative `q̇` included).
pub fn drv(pair: &PairKinematics) -> f64 {
    exp_branch(risk_q_dot(pair))
}

/// Pair metrics evaluated column-wise over many pairs.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PairMetrics {
    pub ttc: Vec<Ttc>,
    pub spr: Vec<f64>,
    pub drv: Vec<f64>,
}

pub fn pair_metrics(pairs: &[PairKinematics]) -> Result<PairMetrics> {
    let n = pairs.len();
    let mut out = PairMetrics {
        ttc: Vec::with_capacity(n),
        spr: Vec::with_capacity(n),
        drv: Vec::with_capacity(n),
    };
    for p in pairs {
        out.ttc.push(ttc(p)?);
        out.spr.push(spr(p));
        out.drv.push(drv(p));
    }
    Ok(out)
}

/// Per-frame safety criteria of one agent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskFeatures {
    pub ttc: Ttc,
    /// Running TET up to and including this frame.
    pub tet: f64,
    /// Running TIT up to and including this frame.
    pub tit: f64,
    pub spr: f64,
    pub drv: f64,
}

impl RiskFeatures {
    pub const SAFE: RiskFeatures = RiskFeatures {
        ttc: Ttc::NoApproach,
        tet: 0.0,
        tit: 0.0,
        spr: 0.0,
        drv: 0.0,
    };

    pub const WIDTH: usize = 5;

    /// `[ttc, tet, tit, spr, drv]` with NoApproach encoded as `TTC* + 1`.
    pub fn to_array(&self, cfg: &SafetyConfig) -> [f64; Self::WIDTH] {
        [self.ttc.encoded(cfg), self.tet, self.tit, self.spr, self.drv]
    }
}

/// Orders neighbors by criticality: smaller TTC, then smaller distance, then
/// the raw kinematics, so the choice never depends on agent ids.
fn criticality_cmp(a: (Ttc, &PairKinematics), b: (Ttc, &PairKinematics)) -> Ordering {
    a.0.order_key()
        .total_cmp(&b.0.order_key())
        .then(a.1.dp.norm_sq().total_cmp(&b.1.dp.norm_sq()))
        .then_with(|| {
            let ka = [a.1.dp.x, a.1.dp.y, a.1.dv.x, a.1.dv.y, a.1.da.x, a.1.da.y];
            let kb = [b.1.dp.x, b.1.dp.y, b.1.dv.x, b.1.dv.y, b.1.da.x, b.1.da.y];
            ka.iter()
                .zip(&kb)
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(Ordering::Equal)
        })
}

/// Safety criteria of agent `agent` at each history frame of the window,
/// reduced over neighbors by the most critical TTC.
pub fn risk_features(window: &SceneWindow, agent: usize, cfg: &SafetyConfig) -> Result<Vec<RiskFeatures>> {
    cfg.validate()?;
    if agent >= window.agents.len() {
        return Err(SafetyError::AgentOutOfRange(agent));
    }
    let mut out = Vec::with_capacity(window.t_h_frames);
    let (mut tet_acc, mut tit_acc) = (0usize, 0.0f64);
    for k in 0..window.t_h_frames {
        let me = &window.agents[agent].states[k];
        let mut best: Option<(Ttc, PairKinematics)> = None;
        for (j, other) in window.agents.iter().enumerate() {
            if j == agent {
                continue;
            }
            let pair = PairKinematics::between(me, &other.states[k]);
            let t = ttc(&pair)?;
            let replace = match &best {
                None => true,
                Some((bt, bp)) => criticality_cmp((t, &pair), (*bt, bp)) == Ordering::Less,
            };
            if replace {
                best = Some((t, pair));
            }
        }
        let Some((t, pair)) = best else {
            out.push(RiskFeatures::SAFE);
            continue;
        };
        if t.is_critical(cfg) {
            tet_acc += 1;
            tit_acc += (cfg.ttc_star - t.seconds().unwrap_or(cfg.ttc_star)) * cfg.tau_sc;
        }
        out.push(RiskFeatures {
            ttc: t,
            tet: tet_acc as f64 * cfg.tau_sc,
            tit: tit_acc,
            spr: spr(&pair),
            drv: drv(&pair),
        });
    }
    Ok(out)
}

/// One line of the feature dump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskRecord {
    pub window: usize,
    pub agent_id: u64,
    pub frame: u64,
    /// Seconds, or `null` for a non-approaching most-critical pair.
    pub ttc: Option<f64>,
    pub tet: f64,
    pub tit: f64,
    pub spr: f64,
    pub drv: f64,
}

pub fn risk_records(window_idx: usize, window: &SceneWindow, cfg: &SafetyConfig) -> Result<Vec<RiskRecord>> {
    let mut out = Vec::new();
    for (a, track) in window.agents.iter().enumerate() {
        let feats = risk_features(window, a, cfg)?;
        for (k, f) in feats.iter().enumerate() {
            out.push(RiskRecord {
                window: window_idx,
                agent_id: track.agent_id,
                frame: track.states[k].frame,
                ttc: f.ttc.seconds(),
                tet: f.tet,
                tit: f.tit,
                spr: f.spr,
                drv: f.drv,
            });
        }
    }
    Ok(out)
}

//! Mixture negative log-likelihood, best-mode RMSE and their learned weighting.

use super::network::{ForwardVars, RHO_BOUND};
use super::{ModelError, Result};
use crate::geom::Vec2;
use crate::nn::{Graph, Tensor, Var};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Lower clamp on every predicted standard deviation (m).
pub const SIGMA_MIN: f64 = 1e-3;

/// Smallest attainable per-frame NLL under the clamps. Subtracting it keeps
/// the weighted NLL term non-negative, so the learned log-variance cannot
/// run off to −∞.
pub fn nll_floor() -> f64 {
    (2.0 * PI).ln() + 2.0 * SIGMA_MIN.ln() + 0.5 * (1.0 - RHO_BOUND * RHO_BOUND).ln()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub rmse_term: f64,
    /// Mixture NLL averaged per future frame.
    pub nll_term: f64,
    /// Learned log-variances `[s_rmse, s_nll]`.
    pub task_weights: [f64; 2],
    pub total: f64,
    /// Number of standard deviations raised to [`SIGMA_MIN`].
    pub clamped_sigmas: usize,
    /// Mode that entered the RMSE term.
    pub best_mode: usize,
}

#[derive(Debug, Clone)]
pub struct LossVars {
    pub total: Var,
    pub rmse: Var,
    pub nll: Var,
    pub clamped_sigmas: usize,
    pub best_mode: usize,
}

/// Index of the largest confidence, first on ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Per-mode log-density of `truth` summed over frames (1×1).
fn mode_log_likelihood(
    g: &mut Graph,
    truth: Var,
    mean: Var,
    log_sigma: Var,
    rho: Var,
    clamped: &mut usize,
) -> Result<Var> {
    let d = g.sub(truth, mean)?;
    let sigma = g.exp(log_sigma);
    *clamped += g.value(sigma).data().iter().filter(|&&s| s < SIGMA_MIN).count();
    let sigma = g.clamp_min(sigma, SIGMA_MIN);
    let inv = g.recip(sigma);
    let z = g.mul(d, inv)?;
    let zx = g.slice_cols(z, 0, 1)?;
    let zy = g.slice_cols(z, 1, 1)?;
    let r2 = g.square(rho);
    let r2 = g.scale(r2, -1.0);
    let one_minus = g.add_scalar(r2, 1.0);
    let sx = g.square(zx);
    let sy = g.square(zy);
    let xy = g.mul(zx, zy)?;
    let cross = g.mul(xy, rho)?;
    let cross = g.scale(cross, -2.0);
    let quad = g.add(sx, sy)?;
    let quad = g.add(quad, cross)?;
    let inv_om = g.recip(one_minus);
    let maha = g.mul(quad, inv_om)?;
    let maha = g.scale(maha, -0.5);
    let log_sigma_clamped = g.log(sigma);
    let log_det = g.sum_cols(log_sigma_clamped);
    let log_om = g.log(one_minus);
    let log_om = g.scale(log_om, 0.5);
    let norm = g.add(log_det, log_om)?;
    let lp = g.sub(maha, norm)?;
    let lp = g.add_scalar(lp, -(2.0 * PI).ln());
    Ok(g.sum(lp))
}

/// Builds the total loss for one window against `truth` (offsets from the anchor).
pub fn loss_vars(g: &mut Graph, fv: &ForwardVars, truth: &[Vec2], s_rmse: Var, s_nll: Var) -> Result<LossVars> {
    let t_f = g.value(fv.means[0]).rows();
    if truth.len() != t_f {
        return Err(ModelError::Features(format!("truth has {} frames, prediction {}", truth.len(), t_f)));
    }
    let rows: Vec<[f64; 2]> = truth.iter().map(|p| [p.x, p.y]).collect();
    let truth_v = g.constant(Tensor::from_rows(&rows)?);

    let mut clamped = 0;
    let mut per_mode = Vec::with_capacity(fv.means.len());
    for k in 0..fv.means.len() {
        per_mode.push(mode_log_likelihood(g, truth_v, fv.means[k], fv.log_sigma[k], fv.rho[k], &mut clamped)?);
    }
    let lp = g.concat_cols(&per_mode)?;
    let joint = g.add(lp, fv.log_conf)?;
    let lse = g.logsumexp(joint);
    let nll = g.scale(lse, -1.0 / t_f as f64);

    let best_mode = argmax(g.value(fv.conf).data());
    let err = g.sub(truth_v, fv.means[best_mode])?;
    let sq = g.square(err);
    let sq = g.sum(sq);
    let msq = g.scale(sq, 1.0 / t_f as f64);
    let rmse = g.sqrt(msq);

    let weighted = |g: &mut Graph, s: Var, term: Var| -> Result<Var> {
        let neg = g.scale(s, -1.0);
        let w = g.exp(neg);
        let wt = g.mul(w, term)?;
        Ok(g.add(wt, s)?)
    };
    let a = weighted(g, s_rmse, rmse)?;
    let shifted = g.add_scalar(nll, -nll_floor());
    let b = weighted(g, s_nll, shifted)?;
    let total = g.add(a, b)?;
    Ok(LossVars {
        total,
        rmse,
        nll,
        clamped_sigmas: clamped,
        best_mode,
    })
}

impl LossReport {
    pub fn from_vars(g: &Graph, v: &LossVars, s_rmse: Var, s_nll: Var) -> Self {
        Self {
            rmse_term: g.scalar(v.rmse),
            nll_term: g.scalar(v.nll),
            task_weights: [g.scalar(s_rmse), g.scalar(s_nll)],
            total: g.scalar(v.total),
            clamped_sigmas: v.clamped_sigmas,
            best_mode: v.best_mode,
        }
    }
}

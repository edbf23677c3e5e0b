//! Horizon RMSE scoring, missing-history evaluation and plot-data emission.

use crate::geom::Vec2;
use crate::model::{Model, ModelError, PredictionSet};
use crate::safety::{risk_features, SafetyConfig};
use crate::scene::{apply_missing, interpolate_gaps, DropVariant, MissingSpec, SceneWindow};
use crate::util::set_sum;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::fmt::Write as _;
use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use thiserror::Error;

/// Reported horizons in seconds.
pub const HORIZONS_S: [f64; 5] = [1.0, 2.0, 3.0, 4.0, 5.0];

/// Training fraction implied by [`Variant::Train25`] when none is given.
pub const TRAIN25_FRACTION: f64 = 0.25;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("nothing to score")]
    Empty,
    #[error("{predictions} predictions for {truths} ground-truth tracks")]
    Misaligned { predictions: usize, truths: usize },
    #[error("horizon {horizon_s} s maps to frame {frame}, but window {window} has {available} future frames")]
    HorizonOutOfRange {
        horizon_s: f64,
        frame: usize,
        window: usize,
        available: usize,
    },
    #[error("window {0} has no complete future")]
    MissingFuture(usize),
    #[error("invalid report: {0}")]
    Report(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Scene(#[from] crate::scene::SceneError),
    #[error(transparent)]
    Safety(#[from] crate::safety::SafetyError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, EvalError>;

/// Test-set variant a report was produced on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Complete,
    Drop3,
    Drop5,
    Drop8,
    /// Complete test set scored with a model trained on a quarter of the data.
    Train25,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::Complete,
        Variant::Drop3,
        Variant::Drop5,
        Variant::Drop8,
        Variant::Train25,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Complete => "complete",
            Variant::Drop3 => "drop3",
            Variant::Drop5 => "drop5",
            Variant::Drop8 => "drop8",
            Variant::Train25 => "train25",
        }
    }

    pub fn missing(self) -> Option<DropVariant> {
        match self {
            Variant::Drop3 => Some(DropVariant::Drop3),
            Variant::Drop5 => Some(DropVariant::Drop5),
            Variant::Drop8 => Some(DropVariant::Drop8),
            Variant::Complete | Variant::Train25 => None,
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Variant::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| format!("unknown variant `{s}` (expected complete, drop3, drop5, drop8 or train25)"))
    }
}

/// One CSV line of a report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HorizonRow {
    pub variant: Variant,
    pub horizon_s: f64,
    /// RMSE of the highest-confidence mode.
    pub rmse_m: f64,
    pub n_windows: usize,
    /// RMSE of the per-window closest mode, for comparison only.
    pub rmse_best_of_m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub variant: Variant,
    pub n_windows: usize,
    pub rows: Vec<HorizonRow>,
}

impl EvalReport {
    pub fn rmse_at(&self, horizon_s: f64) -> Option<f64> {
        self.rows.iter().find(|r| r.horizon_s == horizon_s).map(|r| r.rmse_m)
    }

    /// Mean of the per-horizon RMSE values.
    pub fn mean_rmse(&self) -> f64 {
        self.rows.iter().map(|r| r.rmse_m).sum::<f64>() / self.rows.len() as f64
    }

    pub fn write_csv(&self, out: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for r in &self.rows {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        String::from_utf8(buf).map_err(|e| EvalError::Report(e.to_string()))
    }

    pub fn read_csv(input: impl Read) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let rows: Vec<HorizonRow> = r.deserialize().collect::<std::result::Result<_, _>>()?;
        let first = rows.first().ok_or(EvalError::Empty)?;
        let (variant, n_windows) = (first.variant, first.n_windows);
        if rows.iter().any(|r| r.variant != variant || r.n_windows != n_windows) {
            return Err(EvalError::Report("rows disagree on variant or window count".into()));
        }
        Ok(Self {
            variant,
            n_windows,
            rows,
        })
    }
}

/// Zero-based future index of the frame `horizon_s` seconds after the current time.
pub fn horizon_index(horizon_s: f64, dt: f64) -> usize {
    ((horizon_s / dt).round() as usize).saturating_sub(1)
}

/// Per-horizon RMSE over windows; `truths` holds absolute future positions.
pub fn rmse_by_horizon(preds: &[PredictionSet], truths: &[Vec<Vec2>], variant: Variant) -> Result<EvalReport> {
    if preds.len() != truths.len() {
        return Err(EvalError::Misaligned {
            predictions: preds.len(),
            truths: truths.len(),
        });
    }
    if preds.is_empty() {
        return Err(EvalError::Empty);
    }
    let n = preds.len();
    let mut rows = Vec::with_capacity(HORIZONS_S.len());
    for &h in &HORIZONS_S {
        let mut likely = Vec::with_capacity(n);
        let mut closest = Vec::with_capacity(n);
        for (w, (p, truth)) in preds.iter().zip(truths).enumerate() {
            let k = horizon_index(h, p.dt);
            let available = truth.len().min(p.modes.iter().map(|m| m.positions.len()).min().unwrap_or(0));
            if k >= available {
                return Err(EvalError::HorizonOutOfRange {
                    horizon_s: h,
                    frame: k + 1,
                    window: w,
                    available,
                });
            }
            likely.push((p.best_mode().positions[k] - truth[k]).norm_sq());
            closest.push(
                p.modes
                    .iter()
                    .map(|m| (m.positions[k] - truth[k]).norm_sq())
                    .fold(f64::INFINITY, f64::min),
            );
        }
        rows.push(HorizonRow {
            variant,
            horizon_s: h,
            rmse_m: (set_sum(likely) / n as f64).sqrt(),
            n_windows: n,
            rmse_best_of_m: (set_sum(closest) / n as f64).sqrt(),
        });
    }
    Ok(EvalReport {
        variant,
        n_windows: n,
        rows,
    })
}

/// Applies the variant's missing-frame protocol to one window.
pub fn prepare_window(window: &SceneWindow, variant: Variant) -> Result<SceneWindow> {
    match variant.missing() {
        Some(d) => Ok(interpolate_gaps(&apply_missing(window, &MissingSpec::standard(d))?)?),
        None => Ok(window.clone()),
    }
}

/// Predicts every window under `variant` and scores against its future.
pub fn eval_missing(model: &Model, windows: &[SceneWindow], variant: Variant) -> Result<EvalReport> {
    if windows.is_empty() {
        return Err(EvalError::Empty);
    }
    let scored: Vec<(PredictionSet, Vec<Vec2>)> = windows
        .par_iter()
        .enumerate()
        .map(|(i, w)| {
            let truth: Vec<Vec2> = w.target_future().ok_or(EvalError::MissingFuture(i))?.iter().map(|s| s.p).collect();
            let prepared = prepare_window(w, variant)?;
            let features = model.featurize(&prepared)?;
            Ok((model.predict(&features)?, truth))
        })
        .collect::<Result<_>>()?;
    let (preds, truths): (Vec<_>, Vec<_>) = scored.into_iter().unzip();
    rmse_by_horizon(&preds, &truths, variant)
}

/// Files written by [`emit_plot_data`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlotFiles {
    pub agents_csv: PathBuf,
    pub modes_csv: PathBuf,
    pub svg: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
struct AgentRow {
    agent_id: u64,
    role: &'static str,
    phase: &'static str,
    frame: u64,
    x: Option<f64>,
    y: Option<f64>,
    spr: Option<f64>,
    drv: Option<f64>,
}

#[derive(Debug, Serialize)]
struct ModeRow {
    mode: usize,
    confidence: f64,
    step: usize,
    time_s: f64,
    x: f64,
    y: f64,
    sigma_x: f64,
    sigma_y: f64,
    rho: f64,
}

/// Writes `<stem>_agents.csv`, `<stem>_modes.csv` and optionally `<stem>.svg` into `dir`.
///
/// The agent file has one row per agent per window frame; positions are blank
/// where a neighbor has no state and SPR/DRV are blank outside the history.
pub fn emit_plot_data(
    window: &SceneWindow,
    pred: &PredictionSet,
    safety: &SafetyConfig,
    dir: &Path,
    stem: &str,
    svg: bool,
) -> Result<PlotFiles> {
    fs::create_dir_all(dir)?;
    let agents_csv = dir.join(format!("{stem}_agents.csv"));
    let modes_csv = dir.join(format!("{stem}_modes.csv"));

    let mut w = csv::Writer::from_path(&agents_csv)?;
    for (a, track) in window.agents.iter().enumerate() {
        let risk = risk_features(window, a, safety)?;
        let role = if a == window.target_index { "target" } else { "neighbor" };
        for k in 0..window.window_frames() {
            let state = track.states.get(k);
            let heat = risk.get(k);
            w.serialize(AgentRow {
                agent_id: track.agent_id,
                role,
                phase: if k < window.t_h_frames { "history" } else { "future" },
                frame: window.start_frame + k as u64,
                x: state.map(|s| s.p.x),
                y: state.map(|s| s.p.y),
                spr: heat.map(|r| r.spr),
                drv: heat.map(|r| r.drv),
            })?;
        }
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(&modes_csv)?;
    for (m, mode) in pred.modes.iter().enumerate() {
        for (k, p) in mode.positions.iter().enumerate() {
            w.serialize(ModeRow {
                mode: m,
                confidence: mode.confidence,
                step: k + 1,
                time_s: (k + 1) as f64 * pred.dt,
                x: p.x,
                y: p.y,
                sigma_x: mode.sigma[k][0],
                sigma_y: mode.sigma[k][1],
                rho: mode.rho[k],
            })?;
        }
    }
    w.flush()?;

    let svg = if svg {
        let path = dir.join(format!("{stem}.svg"));
        fs::write(&path, render_svg(window, pred))?;
        Some(path)
    } else {
        None
    };
    Ok(PlotFiles {
        agents_csv,
        modes_csv,
        svg,
    })
}

/// Overlay of histories, ground truth and predicted modes.
pub fn render_svg(window: &SceneWindow, pred: &PredictionSet) -> String {
    let mut polylines: Vec<(Vec<Vec2>, String)> = Vec::new();
    for (a, track) in window.agents.iter().enumerate() {
        let hist: Vec<Vec2> = track.states.iter().take(window.t_h_frames).map(|s| s.p).collect();
        let colour = if a == window.target_index { "#1f4e9e" } else { "#777777" };
        polylines.push((hist, format!(r#"stroke="{colour}" stroke-width="0.4""#)));
    }
    if let Some(future) = window.target_future() {
        let truth: Vec<Vec2> = std::iter::once(window.anchor()).chain(future.iter().map(|s| s.p)).collect();
        polylines.push((truth, r##"stroke="#2a9d3a" stroke-width="0.4" stroke-dasharray="1 1""##.to_string()));
    }
    for mode in &pred.modes {
        let line: Vec<Vec2> = std::iter::once(pred.anchor).chain(mode.positions.iter().copied()).collect();
        let opacity = 0.2 + 0.8 * mode.confidence;
        polylines.push((line, format!(r##"stroke="#d1495b" stroke-width="0.3" stroke-opacity="{opacity:.3}""##)));
    }

    let (mut lo, mut hi) = (Vec2::new(f64::INFINITY, f64::INFINITY), Vec2::new(f64::NEG_INFINITY, f64::NEG_INFINITY));
    for p in polylines.iter().flat_map(|(pts, _)| pts) {
        lo = Vec2::new(lo.x.min(p.x), lo.y.min(p.y));
        hi = Vec2::new(hi.x.max(p.x), hi.y.max(p.y));
    }
    if !lo.x.is_finite() {
        lo = Vec2::ZERO;
        hi = Vec2::ZERO;
    }
    let margin = 2.0;
    let (x0, y0) = (lo.x - margin, lo.y - margin);
    let (width, height) = (hi.x - lo.x + 2.0 * margin, hi.y - lo.y + 2.0 * margin);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="{x0:.3} {y0:.3} {width:.3} {height:.3}">"#
    );
    let _ = writeln!(s, r#"<g fill="none" transform="translate(0 {:.3}) scale(1 -1)">"#, 2.0 * y0 + height);
    for (pts, style) in &polylines {
        let coords: Vec<String> = pts.iter().map(|p| format!("{:.3},{:.3}", p.x, p.y)).collect();
        let _ = writeln!(s, r#"<polyline points="{}" {style}/>"#, coords.join(" "));
    }
    s.push_str("</g>\n</svg>\n");
    s
}

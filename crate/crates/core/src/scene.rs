//! Trajectory records, scene windows and the missing-frame protocol.
//!
//! Tracks are sampled at a fixed interval `dt`. A [`SceneWindow`] clips one
//! target and its co-present neighbors to `t_h + t_f` seconds; the last
//! history frame is the "current time" `t` that drop offsets are relative to.

use crate::geom::Vec2;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;
use std::str::FromStr;
use thiserror::Error;

pub const DEFAULT_DT: f64 = 0.1;
pub const DEFAULT_HISTORY_S: f64 = 3.0;
pub const DEFAULT_FUTURE_S: f64 = 5.0;

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("missing required column `{0}`")]
    MissingColumn(&'static str),
    #[error("duplicate record for agent {agent_id} at frame {frame}")]
    DuplicateFrame { agent_id: u64, frame: u64 },
    #[error("agent {agent_id}: frame step {from} -> {to} is not 1")]
    NonConstantStep { agent_id: u64, from: u64, to: u64 },
    #[error("sampling interval must be positive and finite, got {0}")]
    InvalidDt(f64),
    #[error("agent {agent_id}, frame {frame}: non-finite state")]
    NonFinite { agent_id: u64, frame: u64 },
    #[error("{seconds} s is not a whole number of {dt} s frames")]
    NonIntegralDuration { seconds: f64, dt: f64 },
    #[error("track for agent {agent_id} has dt {found}, expected {expected}")]
    InconsistentDt { agent_id: u64, found: f64, expected: f64 },
    #[error("dropped frame t-{offset} is not strictly inside a {history}-frame history")]
    DropOutsideHistory { offset: usize, history: usize },
    #[error("agent {agent_id}: gap at window frame {index} touches the window boundary")]
    GapAtBoundary { agent_id: u64, index: usize },
    #[error("training fraction must lie in (0, 1], got {0}")]
    InvalidFraction(f64),
    #[error("invalid window: {0}")]
    InvalidWindow(String),
    #[error("line {line}: {message}")]
    Json { line: usize, message: String },
}

pub type Result<T> = std::result::Result<T, SceneError>;

/// One agent at one frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentState {
    pub agent_id: u64,
    pub frame: u64,
    pub p: Vec2,
    pub v: Vec2,
    pub a: Vec2,
}

impl AgentState {
    pub fn is_finite(&self) -> bool {
        self.p.is_finite() && self.v.is_finite() && self.a.is_finite()
    }

    pub fn translated(mut self, offset: Vec2) -> Self {
        self.p += offset;
        self
    }
}

/// Ordered states of one agent, consecutive frames at a fixed `dt`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Track {
    pub agent_id: u64,
    pub dt: f64,
    pub states: Vec<AgentState>,
}

impl Track {
    pub fn new(agent_id: u64, dt: f64, states: Vec<AgentState>) -> Result<Self> {
        let track = Self {
            agent_id,
            dt,
            states,
        };
        track.validate()?;
        Ok(track)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(SceneError::InvalidDt(self.dt));
        }
        for s in &self.states {
            if s.agent_id != self.agent_id {
                return Err(SceneError::InvalidWindow(format!(
                    "state for agent {} inside track {}",
                    s.agent_id, self.agent_id
                )));
            }
            if !s.is_finite() {
                return Err(SceneError::NonFinite {
                    agent_id: s.agent_id,
                    frame: s.frame,
                });
            }
        }
        for w in self.states.windows(2) {
            if w[1].frame != w[0].frame + 1 {
                return Err(SceneError::NonConstantStep {
                    agent_id: self.agent_id,
                    from: w[0].frame,
                    to: w[1].frame,
                });
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn first_frame(&self) -> Option<u64> {
        self.states.first().map(|s| s.frame)
    }

    pub fn last_frame(&self) -> Option<u64> {
        self.states.last().map(|s| s.frame)
    }

    pub fn state_at(&self, frame: u64) -> Option<&AgentState> {
        let first = self.first_frame()?;
        let idx = frame.checked_sub(first)? as usize;
        self.states.get(idx)
    }

    /// States with frames in `from..=to`, clipped to what the track holds.
    pub fn clip(&self, from: u64, to: u64) -> Track {
        let states = self
            .states
            .iter()
            .filter(|s| s.frame >= from && s.frame <= to)
            .copied()
            .collect();
        Track {
            agent_id: self.agent_id,
            dt: self.dt,
            states,
        }
    }

    pub fn covers(&self, from: u64, to: u64) -> bool {
        matches!((self.first_frame(), self.last_frame()), (Some(f), Some(l)) if f <= from && l >= to)
    }
}

/// A target agent plus its neighbors, clipped to one history+future window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneWindow {
    pub target_index: usize,
    pub agents: Vec<Track>,
    pub t_h_frames: usize,
    pub t_f_frames: usize,
    pub dt: f64,
    /// Absolute frame number of the first history frame.
    pub start_frame: u64,
}

impl SceneWindow {
    pub fn target(&self) -> &Track {
        &self.agents[self.target_index]
    }

    /// Absolute frame number of the current time `t` (last history frame).
    pub fn current_frame(&self) -> u64 {
        self.start_frame + self.t_h_frames as u64 - 1
    }

    pub fn window_frames(&self) -> usize {
        self.t_h_frames + self.t_f_frames
    }

    /// History states of agent `idx`; every agent holds the full history.
    pub fn history(&self, idx: usize) -> &[AgentState] {
        &self.agents[idx].states[..self.t_h_frames]
    }

    /// Future ground truth of the target, or `None` when it is incomplete.
    pub fn target_future(&self) -> Option<&[AgentState]> {
        let t = self.target();
        (t.states.len() >= self.window_frames())
            .then(|| &t.states[self.t_h_frames..self.window_frames()])
    }

    pub fn has_full_future(&self) -> bool {
        self.target_future().is_some()
    }

    /// Target position at the current time.
    pub fn anchor(&self) -> Vec2 {
        self.target().states[self.t_h_frames - 1].p
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(SceneError::InvalidDt(self.dt));
        }
        if self.t_h_frames < 2 {
            return Err(SceneError::InvalidWindow("history shorter than 2 frames".into()));
        }
        if self.target_index >= self.agents.len() {
            return Err(SceneError::InvalidWindow("target index out of range".into()));
        }
        let last_hist = self.current_frame();
        for track in &self.agents {
            track.validate()?;
            if (track.dt - self.dt).abs() > 1e-12 {
                return Err(SceneError::InconsistentDt {
                    agent_id: track.agent_id,
                    found: track.dt,
                    expected: self.dt,
                });
            }
            if track.first_frame() != Some(self.start_frame) || !track.covers(self.start_frame, last_hist) {
                return Err(SceneError::InvalidWindow(format!(
                    "agent {} does not cover the history window",
                    track.agent_id
                )));
            }
            if track.len() > self.window_frames() {
                return Err(SceneError::InvalidWindow(format!(
                    "agent {} extends past the window",
                    track.agent_id
                )));
            }
        }
        Ok(())
    }

    /// Same scene with every position shifted by `offset`.
    pub fn translated(&self, offset: Vec2) -> SceneWindow {
        let mut w = self.clone();
        for track in &mut w.agents {
            for s in &mut track.states {
                s.p += offset;
            }
        }
        w
    }
}

/// Converts a duration to a frame count, rejecting non-integral ratios.
pub fn frames_for(seconds: f64, dt: f64) -> Result<usize> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(SceneError::InvalidDt(dt));
    }
    let ratio = seconds / dt;
    let rounded = ratio.round();
    if !(rounded >= 0.0) || (ratio - rounded).abs() > 1e-6 {
        return Err(SceneError::NonIntegralDuration { seconds, dt });
    }
    Ok(rounded as usize)
}

// ---------------------------------------------------------------------------
// Ingestion

struct Row {
    frame: u64,
    p: Vec2,
    v: Option<Vec2>,
    a: Option<Vec2>,
}

/// First-order derivative by central differences, one-sided at the ends.
pub fn finite_difference(values: &[Vec2], dt: f64) -> Vec<Vec2> {
    let n = values.len();
    if n < 2 {
        return vec![Vec2::ZERO; n];
    }
    (0..n)
        .map(|k| {
            if k == 0 {
                (values[1] - values[0]) * (1.0 / dt)
            } else if k == n - 1 {
                (values[n - 1] - values[n - 2]) * (1.0 / dt)
            } else {
                (values[k + 1] - values[k - 1]) * (1.0 / (2.0 * dt))
            }
        })
        .collect()
}

/// Reads `agent_id,frame,x,y[,vx,vy,ax,ay]` records into one track per agent.
///
/// Missing velocity (acceleration) columns are derived from positions
/// (velocities) by [`finite_difference`].
pub fn ingest_csv(path: impl AsRef<Path>, dt: f64) -> Result<Vec<Track>> {
    let text = std::fs::read_to_string(path)?;
    parse_csv(&text, dt)
}

pub fn parse_csv(text: &str, dt: f64) -> Result<Vec<Track>> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(SceneError::InvalidDt(dt));
    }
    if text.trim().is_empty() {
        return Ok(Vec::new());
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| SceneError::Parse {
            line: 1,
            message: e.to_string(),
        })?
        .clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let required = |name: &'static str| col(name).ok_or(SceneError::MissingColumn(name));
    let (c_id, c_frame, c_x, c_y) = (
        required("agent_id")?,
        required("frame")?,
        required("x")?,
        required("y")?,
    );
    let vel_cols = col("vx").zip(col("vy"));
    let acc_cols = col("ax").zip(col("ay"));

    let mut by_agent: BTreeMap<u64, Vec<Row>> = BTreeMap::new();
    for record in reader.records() {
        let record = record.map_err(|e| SceneError::Parse {
            line: e.position().map(|p| p.line()).unwrap_or(0),
            message: e.to_string(),
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let field = |idx: usize, name: &str| -> Result<&str> {
            record.get(idx).ok_or_else(|| SceneError::Parse {
                line,
                message: format!("missing field `{name}`"),
            })
        };
        let int = |idx: usize, name: &str| -> Result<u64> {
            let raw = field(idx, name)?;
            raw.parse::<u64>().map_err(|_| SceneError::Parse {
                line,
                message: format!("`{name}` is not a non-negative integer: {raw:?}"),
            })
        };
        let real = |idx: usize, name: &str| -> Result<f64> {
            let raw = field(idx, name)?;
            match raw.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(SceneError::Parse {
                    line,
                    message: format!("`{name}` is not a finite number: {raw:?}"),
                }),
            }
        };
        let agent_id = int(c_id, "agent_id")?;
        let frame = int(c_frame, "frame")?;
        let p = Vec2::new(real(c_x, "x")?, real(c_y, "y")?);
        let v = match vel_cols {
            Some((cx, cy)) => Some(Vec2::new(real(cx, "vx")?, real(cy, "vy")?)),
            None => None,
        };
        let a = match acc_cols {
            Some((cx, cy)) => Some(Vec2::new(real(cx, "ax")?, real(cy, "ay")?)),
            None => None,
        };
        by_agent.entry(agent_id).or_default().push(Row { frame, p, v, a });
    }

    let mut tracks = Vec::with_capacity(by_agent.len());
    for (agent_id, mut rows) in by_agent {
        rows.sort_by_key(|r| r.frame);
        for w in rows.windows(2) {
            if w[0].frame == w[1].frame {
                return Err(SceneError::DuplicateFrame {
                    agent_id,
                    frame: w[0].frame,
                });
            }
            if w[1].frame != w[0].frame + 1 {
                return Err(SceneError::NonConstantStep {
                    agent_id,
                    from: w[0].frame,
                    to: w[1].frame,
                });
            }
        }
        let positions: Vec<Vec2> = rows.iter().map(|r| r.p).collect();
        let velocities: Vec<Vec2> = match rows.iter().map(|r| r.v).collect::<Option<Vec<_>>>() {
            Some(v) => v,
            None => finite_difference(&positions, dt),
        };
        let accelerations: Vec<Vec2> = match rows.iter().map(|r| r.a).collect::<Option<Vec<_>>>() {
            Some(a) => a,
            None => finite_difference(&velocities, dt),
        };
        let states = rows
            .iter()
            .zip(velocities.iter().zip(&accelerations))
            .map(|(r, (&v, &a))| AgentState {
                agent_id,
                frame: r.frame,
                p: r.p,
                v,
                a,
            })
            .collect();
        tracks.push(Track::new(agent_id, dt, states)?);
    }
    Ok(tracks)
}

/// Writes tracks back out in the ingestion CSV layout (all eight columns).
pub fn write_tracks_csv(tracks: &[Track], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| SceneError::Io(std::io::Error::other(e));
    w.write_record(["agent_id", "frame", "x", "y", "vx", "vy", "ax", "ay"])
        .map_err(io)?;
    for t in tracks {
        for s in &t.states {
            w.write_record(&[
                s.agent_id.to_string(),
                s.frame.to_string(),
                s.p.x.to_string(),
                s.p.y.to_string(),
                s.v.x.to_string(),
                s.v.y.to_string(),
                s.a.x.to_string(),
                s.a.y.to_string(),
            ])
            .map_err(io)?;
        }
    }
    w.flush()?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Windowing

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowConfig {
    pub t_h: f64,
    pub t_f: f64,
    pub dt: f64,
    /// Frames between consecutive window starts; `None` means non-overlapping.
    pub stride_frames: Option<usize>,
}

impl Default for WindowConfig {
    fn default() -> Self {
        Self {
            t_h: DEFAULT_HISTORY_S,
            t_f: DEFAULT_FUTURE_S,
            dt: DEFAULT_DT,
            stride_frames: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum TargetPolicy {
    /// Every agent that covers a full window becomes a target.
    #[default]
    Every,
    /// Only the given agent is ever a target.
    Agent(u64),
}

#[derive(Debug, Clone, Default)]
pub struct Windowing {
    pub windows: Vec<SceneWindow>,
    /// Candidate target tracks too short for a single window.
    pub skipped_tracks: usize,
}

pub fn make_windows(tracks: &[Track], cfg: &WindowConfig, policy: TargetPolicy) -> Result<Windowing> {
    let t_h = frames_for(cfg.t_h, cfg.dt)?;
    let t_f = frames_for(cfg.t_f, cfg.dt)?;
    if t_h < 2 {
        return Err(SceneError::InvalidWindow("history must span at least 2 frames".into()));
    }
    let len = (t_h + t_f) as u64;
    let stride = cfg.stride_frames.unwrap_or(t_h + t_f).max(1) as u64;
    for t in tracks {
        if (t.dt - cfg.dt).abs() > 1e-12 {
            return Err(SceneError::InconsistentDt {
                agent_id: t.agent_id,
                found: t.dt,
                expected: cfg.dt,
            });
        }
    }

    let mut out = Windowing::default();
    for (ti, target) in tracks.iter().enumerate() {
        if let TargetPolicy::Agent(id) = policy {
            if target.agent_id != id {
                continue;
            }
        }
        let (Some(first), Some(last)) = (target.first_frame(), target.last_frame()) else {
            out.skipped_tracks += 1;
            continue;
        };
        if last + 1 - first < len {
            out.skipped_tracks += 1;
            continue;
        }
        let mut start = first;
        while start + len <= last + 1 {
            let hist_end = start + t_h as u64 - 1;
            let win_end = start + len - 1;
            let mut agents = vec![target.clip(start, win_end)];
            let mut neighbors: Vec<&Track> = tracks
                .iter()
                .enumerate()
                .filter(|&(ni, n)| ni != ti && n.covers(start, hist_end))
                .map(|(_, n)| n)
                .collect();
            neighbors.sort_by_key(|n| n.agent_id);
            agents.extend(neighbors.into_iter().map(|n| n.clip(start, win_end)));
            out.windows.push(SceneWindow {
                target_index: 0,
                agents,
                t_h_frames: t_h,
                t_f_frames: t_f,
                dt: cfg.dt,
                start_frame: start,
            });
            start += stride;
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Missing-frame protocol

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DropVariant {
    Drop3,
    Drop5,
    Drop8,
}

impl DropVariant {
    pub const ALL: [DropVariant; 3] = [DropVariant::Drop3, DropVariant::Drop5, DropVariant::Drop8];

    /// Dropped frames as back-offsets `k` from the current time (frame `t-k`).
    ///
    /// drop5 is `t-12..=t-8`; drop3 and drop8 share its midpoint.
    pub fn offsets(self) -> Vec<usize> {
        match self {
            DropVariant::Drop3 => (9..=11).collect(),
            DropVariant::Drop5 => (8..=12).collect(),
            DropVariant::Drop8 => (7..=14).collect(),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            DropVariant::Drop3 => "drop3",
            DropVariant::Drop5 => "drop5",
            DropVariant::Drop8 => "drop8",
        }
    }
}

impl fmt::Display for DropVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DropVariant {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "drop3" => Ok(DropVariant::Drop3),
            "drop5" => Ok(DropVariant::Drop5),
            "drop8" => Ok(DropVariant::Drop8),
            other => Err(format!("unknown drop variant `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MissingSpec {
    pub variant: DropVariant,
    /// Back-offsets from the current time.
    pub dropped: Vec<usize>,
}

impl MissingSpec {
    pub fn standard(variant: DropVariant) -> Self {
        Self {
            variant,
            dropped: variant.offsets(),
        }
    }
}

/// Per-agent states over the window, `None` where a frame was removed.
#[derive(Debug, Clone, PartialEq)]
pub struct GappedTrack {
    pub agent_id: u64,
    pub states: Vec<Option<AgentState>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GappedWindow {
    pub target_index: usize,
    pub agents: Vec<GappedTrack>,
    pub t_h_frames: usize,
    pub t_f_frames: usize,
    pub dt: f64,
    pub start_frame: u64,
}

impl GappedWindow {
    pub fn present_history_frames(&self, agent: usize) -> usize {
        self.agents[agent].states[..self.t_h_frames]
            .iter()
            .filter(|s| s.is_some())
            .count()
    }
}

/// Removes the spec's history frames from every agent in the window.
pub fn apply_missing(window: &SceneWindow, spec: &MissingSpec) -> Result<GappedWindow> {
    let t_h = window.t_h_frames;
    let mut drop_idx = Vec::with_capacity(spec.dropped.len());
    for &k in &spec.dropped {
        if k == 0 || k + 1 >= t_h {
            return Err(SceneError::DropOutsideHistory { offset: k, history: t_h });
        }
        drop_idx.push(t_h - 1 - k);
    }
    let agents = window
        .agents
        .iter()
        .map(|track| GappedTrack {
            agent_id: track.agent_id,
            states: track
                .states
                .iter()
                .enumerate()
                .map(|(i, s)| (!drop_idx.contains(&i)).then_some(*s))
                .collect(),
        })
        .collect();
    Ok(GappedWindow {
        target_index: window.target_index,
        agents,
        t_h_frames: t_h,
        t_f_frames: window.t_f_frames,
        dt: window.dt,
        start_frame: window.start_frame,
    })
}

fn lerp_exact(lo: Vec2, hi: Vec2, j: usize, span: usize) -> Vec2 {
    // ((span-j)*lo + j*hi)/span reproduces affine data bit-exactly whenever
    // the numerator is exact, unlike lo + (hi-lo)*(j/span).
    let (wl, wh, k) = ((span - j) as f64, j as f64, span as f64);
    Vec2::new((wl * lo.x + wh * hi.x) / k, (wl * lo.y + wh * hi.y) / k)
}

/// Repairs interior gaps by per-component linear interpolation of p, v and a.
pub fn interpolate_gaps(gapped: &GappedWindow) -> Result<SceneWindow> {
    let mut agents = Vec::with_capacity(gapped.agents.len());
    for track in &gapped.agents {
        let n = track.states.len();
        let mut states = Vec::with_capacity(n);
        let mut i = 0;
        while i < n {
            if let Some(s) = track.states[i] {
                states.push(s);
                i += 1;
                continue;
            }
            let lo = i.checked_sub(1).ok_or(SceneError::GapAtBoundary {
                agent_id: track.agent_id,
                index: i,
            })?;
            let mut hi = i;
            while hi < n && track.states[hi].is_none() {
                hi += 1;
            }
            if hi == n {
                return Err(SceneError::GapAtBoundary {
                    agent_id: track.agent_id,
                    index: i,
                });
            }
            let (a, b) = (track.states[lo].expect("present"), track.states[hi].expect("present"));
            let span = hi - lo;
            for k in i..hi {
                let j = k - lo;
                states.push(AgentState {
                    agent_id: track.agent_id,
                    frame: a.frame + j as u64,
                    p: lerp_exact(a.p, b.p, j, span),
                    v: lerp_exact(a.v, b.v, j, span),
                    a: lerp_exact(a.a, b.a, j, span),
                });
            }
            i = hi;
        }
        agents.push(Track {
            agent_id: track.agent_id,
            dt: gapped.dt,
            states,
        });
    }
    let window = SceneWindow {
        target_index: gapped.target_index,
        agents,
        t_h_frames: gapped.t_h_frames,
        t_f_frames: gapped.t_f_frames,
        dt: gapped.dt,
        start_frame: gapped.start_frame,
    };
    window.validate()?;
    Ok(window)
}

/// Deterministic subset of `⌊fraction·N⌋` items, original order preserved.
pub fn subsample_training<T: Clone>(items: &[T], fraction: f64, seed: u64) -> Result<Vec<T>> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(SceneError::InvalidFraction(fraction));
    }
    let n = items.len();
    let keep = ((fraction * n as f64) + 1e-9).floor() as usize;
    let keep = keep.min(n);
    if keep == n {
        return Ok(items.to_vec());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx = sample(&mut rng, n, keep).into_vec();
    idx.sort_unstable();
    Ok(idx.into_iter().map(|i| items[i].clone()).collect())
}

// ---------------------------------------------------------------------------
// JSON-lines

/// Writes one JSON object per window, newline-terminated.
pub fn write_windows_jsonl(windows: &[SceneWindow], mut out: impl Write) -> Result<()> {
    for w in windows {
        serde_json::to_writer(&mut out, w).map_err(|e| SceneError::Io(e.into()))?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_windows_jsonl(input: impl BufRead) -> Result<Vec<SceneWindow>> {
    let mut windows = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let w: SceneWindow = serde_json::from_str(&line).map_err(|e| SceneError::Json {
            line: i + 1,
            message: e.to_string(),
        })?;
        w.validate()?;
        windows.push(w);
    }
    Ok(windows)
}

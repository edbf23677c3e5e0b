//! Synthetic highway scenes for tests and desk-scale experiments.
//!
//! Constant-velocity scenes use dyadic positions and speeds so that linear
//! interpolation reproduces them bit for bit.

use crate::geom::Vec2;
use crate::scene::{make_windows, AgentState, Result, SceneError, SceneWindow, TargetPolicy, Track, WindowConfig};
use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

pub const LANE_WIDTH: f64 = 3.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SynthKind {
    ConstantVelocity,
    LaneChange,
    Braking,
}

impl SynthKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SynthKind::ConstantVelocity => "constant-velocity",
            SynthKind::LaneChange => "lane-change",
            SynthKind::Braking => "braking",
        }
    }
}

impl fmt::Display for SynthKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SynthKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "constant-velocity" => Ok(SynthKind::ConstantVelocity),
            "lane-change" => Ok(SynthKind::LaneChange),
            "braking" => Ok(SynthKind::Braking),
            other => Err(format!(
                "unknown synthetic kind '{other}' (expected constant-velocity, lane-change or braking)"
            )),
        }
    }
}

/// Kinematic state at time `t` seconds.
type Motion = Box<dyn Fn(f64) -> (Vec2, Vec2, Vec2)>;

fn track_from(agent_id: u64, frames: usize, dt: f64, motion: &Motion) -> Result<Track> {
    let states = (0..frames)
        .map(|k| {
            let (p, v, a) = motion(k as f64 * dt);
            AgentState {
                agent_id,
                frame: k as u64,
                p,
                v,
                a,
            }
        })
        .collect();
    Track::new(agent_id, dt, states)
}

/// Random multiple of `1/denominator` in `[lo, hi]`.
fn dyadic(rng: &mut ChaCha8Rng, lo: f64, hi: f64, denominator: f64) -> f64 {
    let (a, b) = ((lo * denominator).ceil() as i64, (hi * denominator).floor() as i64);
    rng.gen_range(a..=b) as f64 / denominator
}

/// Constant-velocity track on a dyadic grid, exactly affine in the frame index.
fn affine_track(agent_id: u64, frames: usize, dt: f64, p0: Vec2, step: Vec2) -> Result<Track> {
    let v = step * (1.0 / dt).round();
    let states = (0..frames)
        .map(|k| AgentState {
            agent_id,
            frame: k as u64,
            p: p0 + step * k as f64,
            v,
            a: Vec2::ZERO,
        })
        .collect();
    Track::new(agent_id, dt, states)
}

/// Offsets of neighbors relative to the target, one lane each, ahead or behind.
fn neighbor_offsets(rng: &mut ChaCha8Rng, count: usize) -> Vec<Vec2> {
    let mut lanes = [-1.0, 0.0, 1.0];
    lanes.shuffle(rng);
    lanes[..count]
        .iter()
        .map(|&lane| {
            let gap = dyadic(rng, 6.0, 18.0, 4.0) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
            Vec2::new(gap, lane * LANE_WIDTH)
        })
        .collect()
}

/// Neighbors sharing the target's lane keep its speed so they never overlap it.
fn same_lane(off: Vec2) -> bool {
    off.y == 0.0
}

/// One scene: target (first track) plus two or three neighbors.
pub fn synth_scene(kind: SynthKind, rng: &mut ChaCha8Rng, first_id: u64, frames: usize, dt: f64) -> Result<Vec<Track>> {
    let n_neighbors = rng.gen_range(2..=3);
    let offsets = neighbor_offsets(rng, n_neighbors);
    let mut tracks = Vec::with_capacity(n_neighbors + 1);
    match kind {
        SynthKind::ConstantVelocity => {
            let p0 = Vec2::new(dyadic(rng, 0.0, 50.0, 4.0), 0.0);
            let step = Vec2::new(dyadic(rng, 0.5, 1.5, 16.0), dyadic(rng, -0.0625, 0.0625, 64.0));
            tracks.push(affine_track(first_id, frames, dt, p0, step)?);
            for (k, off) in offsets.iter().enumerate() {
                let jitter = if same_lane(*off) { 0.0 } else { dyadic(rng, -0.125, 0.125, 32.0) };
                let s = Vec2::new(step.x + jitter, 0.0);
                tracks.push(affine_track(first_id + 1 + k as u64, frames, dt, p0 + *off, s)?);
            }
        }
        SynthKind::LaneChange => {
            let speed = rng.gen_range(8.0..15.0);
            let amp = rng.gen_range(0.8..1.75);
            let period = rng.gen_range(3.0..6.0);
            let phase = rng.gen_range(0.0..std::f64::consts::TAU);
            let x0 = rng.gen_range(0.0..50.0);
            let w = std::f64::consts::TAU / period;
            let target: Motion = Box::new(move |t| {
                let s = (w * t + phase).sin();
                let c = (w * t + phase).cos();
                (
                    Vec2::new(x0 + speed * t, amp * s),
                    Vec2::new(speed, amp * w * c),
                    Vec2::new(0.0, -amp * w * w * s),
                )
            });
            tracks.push(track_from(first_id, frames, dt, &target)?);
            for (k, off) in offsets.iter().enumerate() {
                let vs = if same_lane(*off) { speed } else { speed + rng.gen_range(-1.5..1.5) };
                let start = Vec2::new(x0, 0.0) + *off;
                let m: Motion = Box::new(move |t| (start + Vec2::new(vs * t, 0.0), Vec2::new(vs, 0.0), Vec2::ZERO));
                tracks.push(track_from(first_id + 1 + k as u64, frames, dt, &m)?);
            }
        }
        SynthKind::Braking => {
            let speed = rng.gen_range(8.0..15.0);
            let decel = rng.gen_range(1.0..4.0);
            let t0 = rng.gen_range(1.0..5.0);
            let x0 = rng.gen_range(0.0..50.0);
            let stop = t0 + speed / decel;
            let target: Motion = Box::new(move |t| {
                if t < t0 {
                    (Vec2::new(x0 + speed * t, 0.0), Vec2::new(speed, 0.0), Vec2::ZERO)
                } else if t < stop {
                    let s = t - t0;
                    (
                        Vec2::new(x0 + speed * t0 + speed * s - 0.5 * decel * s * s, 0.0),
                        Vec2::new(speed - decel * s, 0.0),
                        Vec2::new(-decel, 0.0),
                    )
                } else {
                    let total = speed * t0 + 0.5 * speed * speed / decel;
                    (Vec2::new(x0 + total, 0.0), Vec2::ZERO, Vec2::ZERO)
                }
            });
            tracks.push(track_from(first_id, frames, dt, &target)?);
            for (k, off) in offsets.iter().enumerate() {
                let vs = if same_lane(*off) { speed } else { speed + rng.gen_range(-1.0..1.0) };
                let off = if same_lane(*off) { Vec2::new(off.x.abs(), 0.0) } else { *off };
                let start = Vec2::new(x0, 0.0) + off;
                let m: Motion = Box::new(move |t| (start + Vec2::new(vs * t, 0.0), Vec2::new(vs, 0.0), Vec2::ZERO));
                tracks.push(track_from(first_id + 1 + k as u64, frames, dt, &m)?);
            }
        }
    }
    Ok(tracks)
}

/// `n` scenes of `kind`, each turned into exactly one window centred on its
/// target. Scene `s` uses agent ids `10·s + 1 ..`.
pub fn synth_windows(kind: SynthKind, n: usize, seed: u64, cfg: &WindowConfig) -> Result<Vec<SceneWindow>> {
    let t_h = crate::scene::frames_for(cfg.t_h, cfg.dt)?;
    let t_f = crate::scene::frames_for(cfg.t_f, cfg.dt)?;
    let frames = t_h + t_f;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let single = WindowConfig {
        stride_frames: Some(frames),
        ..*cfg
    };
    let mut out = Vec::with_capacity(n);
    for s in 0..n {
        let first = 10 * s as u64 + 1;
        let tracks = synth_scene(kind, &mut rng, first, frames, cfg.dt)?;
        let mut w = make_windows(&tracks, &single, TargetPolicy::Agent(first))?.windows;
        match w.len() {
            1 => out.push(w.remove(0)),
            k => {
                return Err(SceneError::InvalidWindow(format!(
                    "synthetic scene {s} produced {k} windows"
                )))
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn is_affine(track: &Track) -> bool {
        let s = &track.states;
        s.windows(3).all(|w| {
            let d1 = w[1].p - w[0].p;
            let d2 = w[2].p - w[1].p;
            d1 == d2 && w[0].v == w[1].v && w[1].a == Vec2::ZERO
        })
    }

    #[test]
    fn constant_velocity_windows_are_affine() {
        let ws = synth_windows(SynthKind::ConstantVelocity, 32, 7, &WindowConfig::default()).unwrap();
        assert_eq!(ws.len(), 32);
        for w in &ws {
            w.validate().unwrap();
            assert!(w.has_full_future());
            assert!(w.agents.len() >= 3);
            assert!(w.agents.iter().all(is_affine));
        }
    }

    #[test]
    fn every_kind_is_reproducible() {
        for kind in [SynthKind::ConstantVelocity, SynthKind::LaneChange, SynthKind::Braking] {
            let a = synth_windows(kind, 4, 1, &WindowConfig::default()).unwrap();
            let b = synth_windows(kind, 4, 1, &WindowConfig::default()).unwrap();
            assert_eq!(a, b);
            assert_eq!(kind.as_str().parse::<SynthKind>().unwrap(), kind);
        }
        assert!("zigzag".parse::<SynthKind>().is_err());
    }

    #[test]
    fn lane_change_is_curved() {
        let ws = synth_windows(SynthKind::LaneChange, 3, 2, &WindowConfig::default()).unwrap();
        for w in &ws {
            assert!(!is_affine(w.target()));
        }
    }

    #[test]
    fn braking_speed_never_negative() {
        let ws = synth_windows(SynthKind::Braking, 8, 3, &WindowConfig::default()).unwrap();
        for w in &ws {
            assert!(w.target().states.iter().all(|s| s.v.x >= 0.0));
        }
    }
}

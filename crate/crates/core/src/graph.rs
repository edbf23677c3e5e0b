//! Proximity graphs, centrality measures and behavior indices.
//!
//! Each frame is a graph whose nodes are agents and whose edges join agents
//! no more than `r` apart, weighted by their distance. Reductions over nodes
//! go through [`set_sum`] (or exact rationals for betweenness), so relabeling
//! agents permutes every output bit-identically.

use crate::geom::Vec2;
use crate::scene::SceneWindow;
use crate::util::set_sum;
use num_rational::Ratio;
use num_traits::Zero;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum GraphError {
    #[error("interaction radius must be positive, got {0}")]
    InvalidRadius(f64),
    #[error("attenuation {alpha} is not below 1/λ_max = {limit}")]
    DivergentAttenuation { alpha: f64, limit: f64 },
    #[error("truncation order must be at least 1")]
    InvalidOrder,
    #[error("need at least 3 frames for curvature, got {0}")]
    SeriesTooShort(usize),
    #[error("time step must be positive, got {0}")]
    InvalidDt(f64),
    #[error("previous degree vector has {found} entries, graph has {expected} nodes")]
    DegreeLength { expected: usize, found: usize },
}

pub type Result<T> = std::result::Result<T, GraphError>;

pub const DEFAULT_RADIUS: f64 = 25.0;

/// Relative tolerance for treating two path lengths as equal.
const PATH_TIE_REL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphSnapshot {
    pub n: usize,
    pub positions: Vec<Vec2>,
    /// Row-major `n × n`; entry is the distance when `0 < d ≤ r`, else 0.
    pub adjacency: Vec<f64>,
    pub r: f64,
}

impl GraphSnapshot {
    #[inline]
    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.adjacency[i * self.n + j]
    }

    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        (0..self.n).filter_map(move |j| {
            let w = self.weight(i, j);
            (w > 0.0).then_some((j, w))
        })
    }

    pub fn degree(&self, i: usize) -> usize {
        self.neighbors(i).count()
    }

    pub fn edge_count(&self) -> usize {
        (0..self.n).map(|i| self.degree(i)).sum::<usize>() / 2
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.n).all(|i| self.weight(i, i) == 0.0 && (0..i).all(|j| self.weight(i, j) == self.weight(j, i)))
    }

    /// Maximum absolute row sum.
    pub fn inf_norm(&self) -> f64 {
        (0..self.n)
            .map(|i| set_sum(self.neighbors(i).map(|(_, w)| w)))
            .fold(0.0, f64::max)
    }

    /// Graph with nodes reordered so that new node `k` is old node `perm[k]`.
    pub fn permuted(&self, perm: &[usize]) -> GraphSnapshot {
        let n = self.n;
        let mut adjacency = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                adjacency[i * n + j] = self.weight(perm[i], perm[j]);
            }
        }
        GraphSnapshot {
            n,
            positions: perm.iter().map(|&p| self.positions[p]).collect(),
            adjacency,
            r: self.r,
        }
    }
}

/// Connects agents at most `r` apart; entries carry the distance.
pub fn build_graph(positions: &[Vec2], r: f64) -> Result<GraphSnapshot> {
    if !(r > 0.0 && r.is_finite()) {
        return Err(GraphError::InvalidRadius(r));
    }
    let n = positions.len();
    let mut adjacency = vec![0.0; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let d = (positions[i] - positions[j]).norm();
            if d > 0.0 && d <= r {
                adjacency[i * n + j] = d;
                adjacency[j * n + i] = d;
            }
        }
    }
    Ok(GraphSnapshot {
        n,
        positions: positions.to_vec(),
        adjacency,
        r,
    })
}

fn mat_vec(g: &GraphSnapshot, x: &[f64]) -> Vec<f64> {
    (0..g.n)
        .map(|i| set_sum(g.neighbors(i).map(|(j, w)| w * x[j])))
        .collect()
}

fn mat_mul(a: &[f64], b: &[f64], n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * n];
    let mut terms = Vec::with_capacity(n);
    for i in 0..n {
        for j in 0..n {
            terms.clear();
            terms.extend((0..n).map(|k| a[i * n + k] * b[k * n + j]));
            out[i * n + j] = crate::util::set_sum_in_place(&mut terms);
        }
    }
    out
}

/// `J_t = |N_t| + J_{t−1}`.
pub fn degree_centrality(g: &GraphSnapshot, prev: &[f64]) -> Result<Vec<f64>> {
    if prev.len() != g.n {
        return Err(GraphError::DegreeLength {
            expected: g.n,
            found: prev.len(),
        });
    }
    Ok((0..g.n).map(|i| g.degree(i) as f64 + prev[i]).collect())
}

/// `(|N|−1) / Σ_{j∈N} d`; 0 for nodes with at most one neighbor.
pub fn closeness_centrality(g: &GraphSnapshot) -> Vec<f64> {
    (0..g.n)
        .map(|i| {
            let deg = g.degree(i);
            if deg <= 1 {
                return 0.0;
            }
            (deg - 1) as f64 / set_sum(g.neighbors(i).map(|(_, w)| w))
        })
        .collect()
}

/// Largest adjacency eigenvalue by power iteration.
///
/// Iterates on `A + cI` (`c` = largest row sum) so the `±λ` pair of a
/// bipartite graph cannot stall convergence. Returns 0 for an edgeless graph.
pub fn spectral_radius(g: &GraphSnapshot) -> f64 {
    if g.edge_count() == 0 {
        return 0.0;
    }
    let shift = g.inf_norm();
    let mut x = vec![1.0 / (g.n as f64).sqrt(); g.n];
    let mut lambda = 0.0;
    for _ in 0..100_000 {
        let ax = mat_vec(g, &x);
        let y: Vec<f64> = ax.iter().zip(&x).map(|(a, xi)| a + shift * xi).collect();
        let rayleigh = set_sum(x.iter().zip(&ax).map(|(a, b)| a * b));
        let norm = set_sum(y.iter().map(|v| v * v)).sqrt();
        x = y.into_iter().map(|v| v / norm).collect();
        let converged = (rayleigh - lambda).abs() <= 1e-13 * rayleigh.abs();
        lambda = rayleigh;
        if converged {
            break;
        }
    }
    lambda
}

/// `Σ_{j∈N} d / λ` with λ the adjacency spectral radius (1 for an empty graph).
pub fn eigenvector_centrality(g: &GraphSnapshot) -> Vec<f64> {
    let lambda = spectral_radius(g);
    let lambda = if lambda > 0.0 { lambda } else { 1.0 };
    (0..g.n)
        .map(|i| set_sum(g.neighbors(i).map(|(_, w)| w)) / lambda)
        .collect()
}

fn paths_tie(a: f64, b: f64) -> bool {
    (a - b).abs() <= PATH_TIE_REL * a.abs().max(b.abs()).max(1.0)
}

/// Single-source shortest distances and shortest-path counts (Dijkstra).
fn shortest_paths_from(g: &GraphSnapshot, s: usize) -> (Vec<f64>, Vec<u128>) {
    let n = g.n;
    let mut dist = vec![f64::INFINITY; n];
    let mut sigma = vec![0u128; n];
    let mut done = vec![false; n];
    dist[s] = 0.0;
    sigma[s] = 1;
    loop {
        // settle the closest open node; graphs are tiny so a linear scan suffices
        let Some(u) = (0..n)
            .filter(|&v| !done[v] && dist[v].is_finite())
            .min_by(|&a, &b| dist[a].total_cmp(&dist[b]).then(a.cmp(&b)))
        else {
            break;
        };
        done[u] = true;
        for (v, w) in g.neighbors(u) {
            if done[v] {
                continue;
            }
            let cand = dist[u] + w;
            if dist[v].is_finite() && paths_tie(cand, dist[v]) {
                sigma[v] += sigma[u];
            } else if cand < dist[v] {
                dist[v] = cand;
                sigma[v] = sigma[u];
            }
        }
    }
    (dist, sigma)
}

/// Betweenness as exact rationals: `Σ_{s<t, s,t≠i} σ_st(i) / σ_st` over
/// distance-weighted shortest paths. Disconnected pairs contribute nothing.
pub fn betweenness_exact(g: &GraphSnapshot) -> Vec<Ratio<i128>> {
    let n = g.n;
    let sp: Vec<(Vec<f64>, Vec<u128>)> = (0..n).map(|s| shortest_paths_from(g, s)).collect();
    let mut out = vec![Ratio::<i128>::zero(); n];
    for s in 0..n {
        for t in (s + 1)..n {
            let d_st = sp[s].0[t];
            if !d_st.is_finite() {
                continue;
            }
            let total = sp[s].1[t] as i128;
            for (i, acc) in out.iter_mut().enumerate() {
                if i == s || i == t {
                    continue;
                }
                let (d_si, d_it) = (sp[s].0[i], sp[i].0[t]);
                if d_si.is_finite() && d_it.is_finite() && paths_tie(d_si + d_it, d_st) {
                    let through = (sp[s].1[i] * sp[i].1[t]) as i128;
                    *acc += Ratio::new(through, total);
                }
            }
        }
    }
    out
}

pub fn betweenness_centrality(g: &GraphSnapshot) -> Vec<f64> {
    betweenness_exact(g)
        .into_iter()
        .map(|r| *r.numer() as f64 / *r.denom() as f64)
        .collect()
}

/// Number of series terms actually used and whether the tail bound was met.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Truncation {
    pub order: usize,
    pub converged: bool,
}

/// `Σ_{k=1..K} (A^k)_ii / k!`, stopping early once `‖A‖_∞^{k+1}/(k+1)! < 1e−9`.
pub fn power_centrality(g: &GraphSnapshot, max_order: usize) -> Result<(Vec<f64>, Truncation)> {
    if max_order == 0 {
        return Err(GraphError::InvalidOrder);
    }
    let n = g.n;
    let norm = g.inf_norm();
    let mut term = g.adjacency.clone(); // A^k / k!
    let mut diag: Vec<Vec<f64>> = vec![Vec::with_capacity(max_order); n];
    let mut tail = norm; // ‖A‖^k / k!
    let mut trunc = Truncation {
        order: max_order,
        converged: false,
    };
    for k in 1..=max_order {
        for (i, d) in diag.iter_mut().enumerate() {
            d.push(term[i * n + i]);
        }
        tail *= norm / (k + 1) as f64;
        if tail < 1e-9 {
            trunc = Truncation {
                order: k,
                converged: true,
            };
            break;
        }
        if k < max_order {
            term = mat_mul(&term, &g.adjacency, n);
            let inv = 1.0 / (k + 1) as f64;
            term.iter_mut().for_each(|v| *v *= inv);
        }
    }
    if !trunc.converged {
        log::warn!(
            "power centrality truncated at order {max_order} with tail bound {tail:.3e} (‖A‖∞ = {norm:.3})"
        );
    }
    // later terms are smaller; summing from the tail keeps rounding low
    let values = diag.into_iter().map(|d| d.iter().rev().sum()).collect();
    Ok((values, trunc))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KatzConfig {
    /// Explicit attenuation; `None` uses `alpha_scale / λ_max`.
    pub alpha: Option<f64>,
    pub alpha_scale: f64,
    pub beta: f64,
    pub max_order: usize,
}

impl Default for KatzConfig {
    fn default() -> Self {
        Self {
            alpha: None,
            alpha_scale: 0.5,
            beta: 0.0,
            max_order: 200,
        }
    }
}

/// `Σ_{k=1..K} [α^k (A^k 𝟙)_i + β^k]` for `α < 1/λ_max`.
pub fn katz_centrality(g: &GraphSnapshot, cfg: &KatzConfig) -> Result<Vec<f64>> {
    if cfg.max_order == 0 {
        return Err(GraphError::InvalidOrder);
    }
    let lambda = spectral_radius(g);
    let alpha = match cfg.alpha {
        Some(a) => a,
        None if lambda > 0.0 => cfg.alpha_scale / lambda,
        None => 0.0,
    };
    let limit = if lambda > 0.0 { 1.0 / lambda } else { f64::INFINITY };
    if alpha >= limit {
        return Err(GraphError::DivergentAttenuation { alpha, limit });
    }
    let mut walk = vec![1.0; g.n]; // α^k A^k 𝟙
    let mut terms: Vec<Vec<f64>> = vec![Vec::new(); g.n];
    let mut beta_k = 1.0;
    for _ in 1..=cfg.max_order {
        walk = mat_vec(g, &walk).into_iter().map(|v| alpha * v).collect();
        beta_k *= cfg.beta;
        let mut biggest: f64 = beta_k.abs();
        for (t, &w) in terms.iter_mut().zip(&walk) {
            t.push(w + beta_k);
            biggest = biggest.max(w.abs());
        }
        if biggest < 1e-17 {
            break;
        }
    }
    Ok(terms.into_iter().map(|t| t.iter().rev().sum()).collect())
}

/// The six centralities of one node at one frame.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CentralityVector {
    pub degree: f64,
    pub closeness: f64,
    pub eigenvector: f64,
    pub betweenness: f64,
    pub power: f64,
    pub katz: f64,
}

impl CentralityVector {
    pub fn to_array(&self) -> [f64; 6] {
        [self.degree, self.closeness, self.eigenvector, self.betweenness, self.power, self.katz]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GraphConfig {
    pub radius: f64,
    pub power_max_order: usize,
    pub katz: KatzConfig,
}

impl Default for GraphConfig {
    fn default() -> Self {
        Self {
            radius: DEFAULT_RADIUS,
            power_max_order: 64,
            katz: KatzConfig::default(),
        }
    }
}

pub fn centralities(g: &GraphSnapshot, prev_degree: &[f64], cfg: &GraphConfig) -> Result<Vec<CentralityVector>> {
    let degree = degree_centrality(g, prev_degree)?;
    let closeness = closeness_centrality(g);
    let eigen = eigenvector_centrality(g);
    let between = betweenness_centrality(g);
    let (power, _) = power_centrality(g, cfg.power_max_order)?;
    let katz = katz_centrality(g, &cfg.katz)?;
    Ok((0..g.n)
        .map(|i| CentralityVector {
            degree: degree[i],
            closeness: closeness[i],
            eigenvector: eigen[i],
            betweenness: between[i],
            power: power[i],
            katz: katz[i],
        })
        .collect())
}

/// Per-frame centralities of every agent over the window history; the
/// cumulative degree restarts at zero at the first history frame.
pub fn centrality_series(window: &SceneWindow, cfg: &GraphConfig) -> Result<Vec<Vec<CentralityVector>>> {
    let n = window.agents.len();
    let mut prev = vec![0.0; n];
    let mut out = Vec::with_capacity(window.t_h_frames);
    for k in 0..window.t_h_frames {
        let positions: Vec<Vec2> = window.agents.iter().map(|t| t.states[k].p).collect();
        let g = build_graph(&positions, cfg.radius)?;
        let c = centralities(&g, &prev, cfg)?;
        prev = c.iter().map(|v| v.degree).collect();
        out.push(c);
    }
    Ok(out)
}

/// Magnitude, tendency and curvature of the centrality vector at one frame.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BehaviorIndices {
    pub bmi: [f64; 6],
    pub bti: [f64; 6],
    pub bci: [f64; 6],
}

impl BehaviorIndices {
    pub const WIDTH: usize = 18;

    pub fn to_array(&self) -> [f64; Self::WIDTH] {
        let mut out = [0.0; Self::WIDTH];
        out[..6].copy_from_slice(&self.bmi);
        out[6..12].copy_from_slice(&self.bti);
        out[12..].copy_from_slice(&self.bci);
        out
    }
}

/// BMI `|C|`, BTI `|∂C/∂t|` and BCI `|∂²C/∂t²|` by central differences,
/// one-sided at the two ends.
pub fn behavior_indices(series: &[[f64; 6]], dt: f64) -> Result<Vec<BehaviorIndices>> {
    let n = series.len();
    if n < 3 {
        return Err(GraphError::SeriesTooShort(n));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(GraphError::InvalidDt(dt));
    }
    let dt2 = dt * dt;
    Ok((0..n)
        .map(|k| {
            let mut idx = BehaviorIndices::default();
            for c in 0..6 {
                let at = |i: usize| series[i][c];
                idx.bmi[c] = at(k).abs();
                let slope = if k == 0 {
                    (at(1) - at(0)) / dt
                } else if k == n - 1 {
                    (at(n - 1) - at(n - 2)) / dt
                } else {
                    (at(k + 1) - at(k - 1)) / (2.0 * dt)
                };
                // second differences centered at k, or at the nearest interior point
                let m = k.clamp(1, n - 2);
                let curve = (at(m + 1) - 2.0 * at(m) + at(m - 1)) / dt2;
                idx.bti[c] = slope.abs();
                idx.bci[c] = curve.abs();
            }
            idx
        })
        .collect())
}

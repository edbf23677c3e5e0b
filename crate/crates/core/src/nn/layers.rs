//! Parameterized layers built on the [`Graph`] tape.

use super::params::{ParamId, ParamStore};
use super::tape::{Graph, Var};
use super::tensor::Tensor;
use super::{NnError, Result};
use crate::util::set_sum;
use rand_chacha::ChaCha8Rng;

pub const DEFAULT_EPS: f64 = 1e-5;

fn key(prefix: &str, name: &str) -> String {
    format!("{prefix}.{name}")
}

/// Affine map `x·W + b`.
#[derive(Debug, Clone)]
pub struct Dense {
    pub w: ParamId,
    pub b: ParamId,
    pub input: usize,
    pub output: usize,
}

impl Dense {
    pub fn new(
        store: &mut ParamStore,
        prefix: &str,
        input: usize,
        output: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        Ok(Self {
            w: store.add_uniform(key(prefix, "w"), input, output, input, rng)?,
            b: store.add_uniform(key(prefix, "b"), 1, output, input, rng)?,
            input,
            output,
        })
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Result<Var> {
        let w = g.param(self.w);
        let b = g.param(self.b);
        let xw = g.matmul(x, w)?;
        g.add_row(xw, b)
    }
}

/// Gated linear unit `(xW₁ + b₁) ⊙ σ(xW₂ + b₂)`.
#[derive(Debug, Clone)]
pub struct Glu {
    pub linear: Dense,
    pub gate: Dense,
}

impl Glu {
    pub fn new(
        store: &mut ParamStore,
        prefix: &str,
        input: usize,
        output: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        Ok(Self {
            linear: Dense::new(store, &key(prefix, "lin"), input, output, rng)?,
            gate: Dense::new(store, &key(prefix, "gate"), input, output, rng)?,
        })
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Result<Var> {
        let lin = self.linear.forward(g, x)?;
        let gate = self.gate.forward(g, x)?;
        let gate = g.sigmoid(gate);
        g.mul(lin, gate)
    }
}

/// Two dense layers with a ReLU between them.
#[derive(Debug, Clone)]
pub struct Mlp {
    pub first: Dense,
    pub second: Dense,
}

impl Mlp {
    pub fn new(
        store: &mut ParamStore,
        prefix: &str,
        input: usize,
        hidden: usize,
        output: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        Ok(Self {
            first: Dense::new(store, &key(prefix, "fc1"), input, hidden, rng)?,
            second: Dense::new(store, &key(prefix, "fc2"), hidden, output, rng)?,
        })
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Result<Var> {
        let h = self.first.forward(g, x)?;
        let h = g.relu(h);
        self.second.forward(g, h)
    }
}

/// Which entries share normalization statistics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormScope {
    /// Each row on its own (layer normalization).
    Row,
    /// Each group of contiguous feature columns across all rows, treating
    /// the rows as time steps of one sample (group normalization).
    ColumnGroups(usize),
}

/// Standardization followed by a per-feature affine map.
#[derive(Debug, Clone)]
pub struct Norm {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub scope: NormScope,
    pub eps: f64,
}

impl Norm {
    pub fn layer(store: &mut ParamStore, prefix: &str, dim: usize) -> Result<Self> {
        Self::with_scope(store, prefix, dim, NormScope::Row)
    }

    pub fn group(store: &mut ParamStore, prefix: &str, dim: usize, groups: usize) -> Result<Self> {
        if groups == 0 || dim % groups != 0 {
            return Err(NnError::Shape(format!("{dim} features not divisible into {groups} groups")));
        }
        Self::with_scope(store, prefix, dim, NormScope::ColumnGroups(groups))
    }

    fn with_scope(store: &mut ParamStore, prefix: &str, dim: usize, scope: NormScope) -> Result<Self> {
        Ok(Self {
            gamma: store.add_filled(key(prefix, "gamma"), 1, dim, 1.0)?,
            beta: store.add_filled(key(prefix, "beta"), 1, dim, 0.0)?,
            scope,
            eps: DEFAULT_EPS,
        })
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Result<Var> {
        let n = match self.scope {
            NormScope::Row => g.normalize(x, 1, self.eps)?,
            NormScope::ColumnGroups(groups) => {
                let (rows, cols) = (g.value(x).rows(), g.value(x).cols());
                if cols % groups != 0 {
                    return Err(NnError::Shape(format!("{cols} features not divisible into {groups} groups")));
                }
                let t = g.transpose(x);
                let flat = g.reshape(t, groups, cols / groups * rows)?;
                let n = g.normalize(flat, 1, self.eps)?;
                let back = g.reshape(n, cols, rows)?;
                g.transpose(back)
            }
        };
        let gamma = g.param(self.gamma);
        let beta = g.param(self.beta);
        let y = g.mul_row(n, gamma)?;
        g.add_row(y, beta)
    }
}

/// Scaled dot-product multi-head self-attention over the rows of its input.
#[derive(Debug, Clone)]
pub struct MultiHeadAttention {
    pub q: Dense,
    pub k: Dense,
    pub v: Dense,
    pub out: Dense,
    pub heads: usize,
    pub dim: usize,
}

impl MultiHeadAttention {
    pub fn new(
        store: &mut ParamStore,
        prefix: &str,
        dim: usize,
        heads: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        if heads == 0 || dim % heads != 0 {
            return Err(NnError::Shape(format!("width {dim} not divisible by {heads} heads")));
        }
        Ok(Self {
            q: Dense::new(store, &key(prefix, "q"), dim, dim, rng)?,
            k: Dense::new(store, &key(prefix, "k"), dim, dim, rng)?,
            v: Dense::new(store, &key(prefix, "v"), dim, dim, rng)?,
            out: Dense::new(store, &key(prefix, "o"), dim, dim, rng)?,
            heads,
            dim,
        })
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Result<Var> {
        if g.value(x).cols() != self.dim {
            return Err(NnError::Shape(format!(
                "attention expects width {}, got {}",
                self.dim,
                g.value(x).cols()
            )));
        }
        let q = self.q.forward(g, x)?;
        let k = self.k.forward(g, x)?;
        let v = self.v.forward(g, x)?;
        let dh = self.dim / self.heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let mut outs = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let qh = g.slice_cols(q, h * dh, dh)?;
            let kh = g.slice_cols(k, h * dh, dh)?;
            let vh = g.slice_cols(v, h * dh, dh)?;
            let kt = g.transpose(kh);
            let scores = g.matmul(qh, kt)?;
            let scores = g.scale(scores, scale);
            let p = g.softmax(scores);
            outs.push(g.set_matmul(p, vh)?);
        }
        let cat = g.concat_cols(&outs)?;
        self.out.forward(g, cat)
    }
}

/// Symmetrically normalized adjacency `D̃^{-1/2}(A + I)D̃^{-1/2}` for a
/// row-major n×n weight matrix.
pub fn normalized_adjacency(a: &[f64], n: usize) -> Result<Tensor> {
    if a.len() != n * n {
        return Err(NnError::Shape(format!("adjacency has {} entries for {n} nodes", a.len())));
    }
    for i in 0..n {
        for j in 0..i {
            if a[i * n + j] != a[j * n + i] {
                return Err(NnError::AsymmetricAdjacency { i, j });
            }
        }
    }
    let tilde = |i: usize, j: usize| a[i * n + j] + if i == j { 1.0 } else { 0.0 };
    let deg: Vec<f64> = (0..n).map(|i| set_sum((0..n).map(|j| tilde(i, j)))).collect();
    let mut out = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            out.push(tilde(i, j) / (deg[i] * deg[j]).sqrt());
        }
    }
    Tensor::matrix(n, n, out)
}

/// Graph convolution `ReLU(Â Z W)` with a precomputed normalized adjacency.
#[derive(Debug, Clone)]
pub struct GcnLayer {
    pub w: ParamId,
    pub input: usize,
    pub output: usize,
}

impl GcnLayer {
    pub fn new(
        store: &mut ParamStore,
        prefix: &str,
        input: usize,
        output: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        Ok(Self {
            w: store.add_uniform(key(prefix, "w"), input, output, input, rng)?,
            input,
            output,
        })
    }

    /// `a_hat` must come from [`normalized_adjacency`].
    pub fn forward(&self, g: &mut Graph, z: Var, a_hat: Var) -> Result<Var> {
        let w = g.param(self.w);
        let zw = g.matmul(z, w)?;
        let agg = g.set_matmul(a_hat, zw)?;
        Ok(g.relu(agg))
    }
}

/// LSTM with gate order input, forget, candidate, output.
#[derive(Debug, Clone)]
pub struct Lstm {
    pub wx: ParamId,
    pub wh: ParamId,
    pub b: ParamId,
    pub input: usize,
    pub hidden: usize,
}

/// Added to the initial forget-gate bias.
pub const FORGET_BIAS: f64 = 1.0;

impl Lstm {
    pub fn new(
        store: &mut ParamStore,
        prefix: &str,
        input: usize,
        hidden: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        let wx = store.add_uniform(key(prefix, "wx"), input, 4 * hidden, hidden, rng)?;
        let wh = store.add_uniform(key(prefix, "wh"), hidden, 4 * hidden, hidden, rng)?;
        let b = store.add_uniform(key(prefix, "b"), 1, 4 * hidden, hidden, rng)?;
        for v in &mut store.get_mut(b).data_mut()[hidden..2 * hidden] {
            *v += FORGET_BIAS;
        }
        Ok(Self {
            wx,
            wh,
            b,
            input,
            hidden,
        })
    }

    fn gates(&self, g: &mut Graph, pre: Var, c: Var) -> Result<(Var, Var)> {
        let hd = self.hidden;
        let i = g.slice_cols(pre, 0, hd)?;
        let f = g.slice_cols(pre, hd, hd)?;
        let cand = g.slice_cols(pre, 2 * hd, hd)?;
        let o = g.slice_cols(pre, 3 * hd, hd)?;
        let i = g.sigmoid(i);
        let f = g.sigmoid(f);
        let cand = g.tanh(cand);
        let o = g.sigmoid(o);
        let keep = g.mul(f, c)?;
        let write = g.mul(i, cand)?;
        let c_next = g.add(keep, write)?;
        let tc = g.tanh(c_next);
        let h_next = g.mul(o, tc)?;
        Ok((h_next, c_next))
    }

    /// One step on a 1×input row. Returns `(h', c')`.
    pub fn cell(&self, g: &mut Graph, x: Var, h: Var, c: Var) -> Result<(Var, Var)> {
        if g.value(x).cols() != self.input || g.value(h).cols() != self.hidden {
            return Err(NnError::Shape("lstm cell dimension mismatch".into()));
        }
        let wx = g.param(self.wx);
        let wh = g.param(self.wh);
        let b = g.param(self.b);
        let xw = g.matmul(x, wx)?;
        let hw = g.matmul(h, wh)?;
        let pre = g.add(xw, hw)?;
        let pre = g.add_row(pre, b)?;
        self.gates(g, pre, c)
    }

    /// Runs over the rows of `xs` from zero state; returns the stacked hidden states.
    pub fn sequence(&self, g: &mut Graph, xs: Var) -> Result<Var> {
        let h0 = g.constant(Tensor::zeros(1, self.hidden));
        let c0 = g.constant(Tensor::zeros(1, self.hidden));
        self.sequence_from(g, xs, h0, c0).map(|(hs, _, _)| hs)
    }

    /// Runs over the rows of `xs` from `(h0, c0)`; returns `(hs, h_T, c_T)`.
    pub fn sequence_from(&self, g: &mut Graph, xs: Var, h0: Var, c0: Var) -> Result<(Var, Var, Var)> {
        let steps = g.value(xs).rows();
        if steps == 0 {
            return Err(NnError::EmptySequence);
        }
        if g.value(xs).cols() != self.input {
            return Err(NnError::Shape(format!(
                "lstm expects {} inputs, got {}",
                self.input,
                g.value(xs).cols()
            )));
        }
        let wx = g.param(self.wx);
        let wh = g.param(self.wh);
        let b = g.param(self.b);
        let xw = g.matmul(xs, wx)?;
        let xw = g.add_row(xw, b)?;
        let (mut h, mut c) = (h0, c0);
        let mut hs = Vec::with_capacity(steps);
        for t in 0..steps {
            let xt = g.row(xw, t)?;
            let hw = g.matmul(h, wh)?;
            let pre = g.add(xt, hw)?;
            (h, c) = self.gates(g, pre, c)?;
            hs.push(h);
        }
        let stacked = g.concat_rows(&hs)?;
        Ok((stacked, h, c))
    }
}

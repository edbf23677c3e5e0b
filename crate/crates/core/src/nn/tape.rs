//! Reverse-mode automatic differentiation over [`Tensor`] values.
//!
//! A [`Graph`] records every op as it is evaluated. Calling
//! [`Graph::backward`] walks the record in reverse and accumulates
//! gradients for every node that depends on a trainable leaf.

use super::params::{ParamId, ParamStore};
use super::tensor::Tensor;
use super::{NnError, Result};
use crate::util::{set_sum, set_sum_in_place};

/// Handle to a node in a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    SetMatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    MulRow(Var, Var),
    MulCol(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    Exp(Var),
    Log(Var),
    Sqrt(Var),
    Square(Var),
    Recip(Var),
    ClampMin(Var, f64),
    Softmax(Var),
    LogSoftmax(Var),
    LogSumExp(Var),
    Normalize { x: Var, groups: usize, inv_std: Vec<f64> },
    Transpose(Var),
    Reshape(Var),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SliceCols(Var, usize),
    SliceRows(Var, usize),
    SumAll(Var),
    SumRows(Var),
    SumCols(Var),
    BroadcastRows(Var),
    BroadcastCols(Var),
}

#[derive(Debug, Clone)]
struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// A single-use computation record. Parameters are bound lazily from the
/// attached [`ParamStore`] so that each parameter maps to one leaf.
pub struct Graph<'s> {
    nodes: Vec<Node>,
    store: Option<&'s ParamStore>,
    bound: Vec<Option<Var>>,
}

/// Gradients produced by [`Graph::backward`].
#[derive(Debug, Clone)]
pub struct Grads {
    slots: Vec<Option<Tensor>>,
}

impl Grads {
    /// Gradient with respect to `v`, or `None` if `v` does not influence the output.
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.slots.get(v.0).and_then(|s| s.as_ref())
    }
}

fn shape_err(op: &str, a: &Tensor, b: &Tensor) -> NnError {
    NnError::Shape(format!(
        "{op}: {}x{} vs {}x{}",
        a.rows(),
        a.cols(),
        b.rows(),
        b.cols()
    ))
}

fn set_matmul(a: &Tensor, b: &Tensor) -> Tensor {
    let (m, n) = (a.rows(), b.cols());
    let mut out = Vec::with_capacity(m * n);
    let mut terms = Vec::with_capacity(a.cols());
    for i in 0..m {
        // Zero coefficients are skipped.
        let nz: Vec<(usize, f64)> = a.row(i).iter().copied().enumerate().filter(|&(_, v)| v != 0.0).collect();
        for j in 0..n {
            terms.clear();
            terms.extend(nz.iter().map(|&(p, v)| v * b.at(p, j)));
            out.push(set_sum_in_place(&mut terms));
        }
    }
    Tensor::matrix(m, n, out).expect("shape computed")
}

fn col_sums(t: &Tensor) -> Tensor {
    let c = t.cols();
    let mut out = vec![0.0; c];
    for r in 0..t.rows() {
        for (o, v) in out.iter_mut().zip(t.row(r)) {
            *o += v;
        }
    }
    Tensor::matrix(1, c, out).expect("shape computed")
}

fn row_sums(t: &Tensor) -> Tensor {
    let data = (0..t.rows()).map(|r| t.row(r).iter().sum()).collect();
    Tensor::matrix(t.rows(), 1, data).expect("shape computed")
}

fn broadcast_row(row: &Tensor, rows: usize) -> Tensor {
    let mut data = Vec::with_capacity(rows * row.cols());
    for _ in 0..rows {
        data.extend_from_slice(row.data());
    }
    Tensor::matrix(rows, row.cols(), data).expect("shape computed")
}

fn broadcast_col(col: &Tensor, cols: usize) -> Tensor {
    let mut data = Vec::with_capacity(col.rows() * cols);
    for &v in col.data() {
        data.extend(std::iter::repeat(v).take(cols));
    }
    Tensor::matrix(col.rows(), cols, data).expect("shape computed")
}

impl<'s> Graph<'s> {
    /// Graph without parameters; only explicit leaves can receive gradients.
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            store: None,
            bound: Vec::new(),
        }
    }

    pub fn with_params(store: &'s ParamStore) -> Self {
        Self {
            nodes: Vec::new(),
            store: Some(store),
            bound: vec![None; store.len()],
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn ng(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// First element of `v`; intended for 1×1 losses.
    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value.data()[0]
    }

    /// Trainable input.
    pub fn leaf(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, true)
    }

    /// Non-trainable input.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, false)
    }

    /// Leaf bound to a stored parameter. Repeated calls return the same node.
    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.bound.get(id.index()).copied().flatten() {
            return v;
        }
        let store = self.store.expect("graph has no parameter store");
        let v = self.push(store.get(id).clone(), Op::Leaf, true);
        self.bound[id.index()] = Some(v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).matmul(self.value(b))?;
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(out, Op::MatMul(a, b), ng))
    }

    /// Matrix product whose inner reductions are summed independently of
    /// term order, so permuting the inner index yields bit-identical output.
    pub fn set_matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.cols() != tb.rows() {
            return Err(shape_err("set_matmul", ta, tb));
        }
        let out = set_matmul(ta, tb);
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(out, Op::SetMatMul(a, b), ng))
    }

    fn binary(&mut self, name: &str, a: Var, b: Var, f: fn(f64, f64) -> f64) -> Result<Tensor> {
        let (ta, tb) = (self.value(a), self.value(b));
        if !ta.same_shape(tb) {
            return Err(shape_err(name, ta, tb));
        }
        Ok(ta.zip_map(tb, f))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.binary("add", a, b, |x, y| x + y)?;
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(out, Op::Add(a, b), ng))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.binary("sub", a, b, |x, y| x - y)?;
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(out, Op::Sub(a, b), ng))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.binary("mul", a, b, |x, y| x * y)?;
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(out, Op::Mul(a, b), ng))
    }

    /// `a + row` with `row` (1×c) broadcast over the rows of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (ta, tr) = (self.value(a), self.value(row));
        if tr.rows() != 1 || tr.cols() != ta.cols() {
            return Err(shape_err("add_row", ta, tr));
        }
        let c = ta.cols();
        let mut out = ta.clone();
        for (i, v) in out.data_mut().iter_mut().enumerate() {
            *v += tr.data()[i % c];
        }
        let ng = self.ng(a) || self.ng(row);
        Ok(self.push(out, Op::AddRow(a, row), ng))
    }

    /// `a ⊙ row` with `row` (1×c) broadcast over the rows of `a`.
    pub fn mul_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (ta, tr) = (self.value(a), self.value(row));
        if tr.rows() != 1 || tr.cols() != ta.cols() {
            return Err(shape_err("mul_row", ta, tr));
        }
        let c = ta.cols();
        let mut out = ta.clone();
        for (i, v) in out.data_mut().iter_mut().enumerate() {
            *v *= tr.data()[i % c];
        }
        let ng = self.ng(a) || self.ng(row);
        Ok(self.push(out, Op::MulRow(a, row), ng))
    }

    /// `a ⊙ col` with `col` (r×1) broadcast over the columns of `a`.
    pub fn mul_col(&mut self, a: Var, col: Var) -> Result<Var> {
        let (ta, tc) = (self.value(a), self.value(col));
        if tc.cols() != 1 || tc.rows() != ta.rows() {
            return Err(shape_err("mul_col", ta, tc));
        }
        let c = ta.cols();
        let mut out = ta.clone();
        for (i, v) in out.data_mut().iter_mut().enumerate() {
            *v *= tc.data()[i / c];
        }
        let ng = self.ng(a) || self.ng(col);
        Ok(self.push(out, Op::MulCol(a, col), ng))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let out = self.value(a).map(|x| x * s);
        let ng = self.ng(a);
        self.push(out, Op::Scale(a, s), ng)
    }

    pub fn add_scalar(&mut self, a: Var, s: f64) -> Var {
        let out = self.value(a).map(|x| x + s);
        let ng = self.ng(a);
        self.push(out, Op::AddScalar(a), ng)
    }

    fn unary(&mut self, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let out = self.value(a).map(f);
        let ng = self.ng(a);
        self.push(out, op, ng)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(a, sigmoid, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(a, f64::tanh, Op::Tanh(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(a, |x| x.max(0.0), Op::Relu(a))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(a, f64::exp, Op::Exp(a))
    }

    pub fn log(&mut self, a: Var) -> Var {
        self.unary(a, f64::ln, Op::Log(a))
    }

    /// Square root; the gradient at 0 is taken as 0.
    pub fn sqrt(&mut self, a: Var) -> Var {
        self.unary(a, f64::sqrt, Op::Sqrt(a))
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.unary(a, |x| x * x, Op::Square(a))
    }

    pub fn recip(&mut self, a: Var) -> Var {
        self.unary(a, |x| 1.0 / x, Op::Recip(a))
    }

    /// `max(a, min)`; no gradient flows through clamped entries.
    pub fn clamp_min(&mut self, a: Var, min: f64) -> Var {
        self.unary(a, |x| x.max(min), Op::ClampMin(a, min))
    }

    /// Row-wise softmax.
    pub fn softmax(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let mut out = t.clone();
        let c = t.cols();
        for r in 0..t.rows() {
            let row = &mut out.data_mut()[r * c..(r + 1) * c];
            let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            row.iter_mut().for_each(|v| *v = (*v - m).exp());
            let z = set_sum(row.iter().copied());
            row.iter_mut().for_each(|v| *v /= z);
        }
        let ng = self.ng(a);
        self.push(out, Op::Softmax(a), ng)
    }

    /// Row-wise log-softmax.
    pub fn log_softmax(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let lse = logsumexp_rows(t);
        let c = t.cols();
        let mut out = t.clone();
        for (i, v) in out.data_mut().iter_mut().enumerate() {
            *v -= lse[i / c];
        }
        let ng = self.ng(a);
        self.push(out, Op::LogSoftmax(a), ng)
    }

    /// Row-wise log-sum-exp, producing an r×1 column.
    pub fn logsumexp(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let out = Tensor::matrix(t.rows(), 1, logsumexp_rows(t)).expect("shape computed");
        let ng = self.ng(a);
        self.push(out, Op::LogSumExp(a), ng)
    }

    /// Standardizes each row, split into `groups` equal contiguous groups,
    /// to zero mean and unit (biased) variance.
    pub fn normalize(&mut self, a: Var, groups: usize, eps: f64) -> Result<Var> {
        let t = self.value(a);
        let c = t.cols();
        if groups == 0 || c % groups != 0 {
            return Err(NnError::Shape(format!("{c} columns not divisible into {groups} groups")));
        }
        if !(eps > 0.0) {
            return Err(NnError::InvalidConfig("normalization eps must be positive".into()));
        }
        let size = c / groups;
        let mut out = t.clone();
        let mut inv_std = Vec::with_capacity(t.rows() * groups);
        for chunk in out.data_mut().chunks_mut(size) {
            let n = size as f64;
            let mean = chunk.iter().sum::<f64>() / n;
            let var = chunk.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            let s = 1.0 / (var + eps).sqrt();
            chunk.iter_mut().for_each(|v| *v = (*v - mean) * s);
            inv_std.push(s);
        }
        let ng = self.ng(a);
        Ok(self.push(out, Op::Normalize { x: a, groups, inv_std }, ng))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let out = self.value(a).transpose();
        let ng = self.ng(a);
        self.push(out, Op::Transpose(a), ng)
    }

    /// Same data, new row/column split.
    pub fn reshape(&mut self, a: Var, rows: usize, cols: usize) -> Result<Var> {
        let t = self.value(a);
        if rows * cols != t.len() {
            return Err(NnError::Shape(format!("cannot reshape {} values to {rows}x{cols}", t.len())));
        }
        let out = Tensor::matrix(rows, cols, t.data().to_vec())?;
        let ng = self.ng(a);
        Ok(self.push(out, Op::Reshape(a), ng))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts.first().ok_or_else(|| NnError::Shape("empty concat".into()))?;
        let rows = self.value(*first).rows();
        let mut cols = 0;
        for &p in parts {
            let t = self.value(p);
            if t.rows() != rows {
                return Err(shape_err("concat_cols", self.value(*first), t));
            }
            cols += t.cols();
        }
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for &p in parts {
                data.extend_from_slice(self.value(p).row(r));
            }
        }
        let ng = parts.iter().any(|&p| self.ng(p));
        let out = Tensor::matrix(rows, cols, data)?;
        Ok(self.push(out, Op::ConcatCols(parts.to_vec()), ng))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts.first().ok_or_else(|| NnError::Shape("empty concat".into()))?;
        let cols = self.value(*first).cols();
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let t = self.value(p);
            if t.cols() != cols {
                return Err(shape_err("concat_rows", self.value(*first), t));
            }
            rows += t.rows();
            data.extend_from_slice(t.data());
        }
        let ng = parts.iter().any(|&p| self.ng(p));
        let out = Tensor::matrix(rows, cols, data)?;
        Ok(self.push(out, Op::ConcatRows(parts.to_vec()), ng))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let t = self.value(a);
        if start + len > t.cols() {
            return Err(NnError::Shape(format!(
                "column slice {start}..{} of {}",
                start + len,
                t.cols()
            )));
        }
        let mut data = Vec::with_capacity(t.rows() * len);
        for r in 0..t.rows() {
            data.extend_from_slice(&t.row(r)[start..start + len]);
        }
        let out = Tensor::matrix(t.rows(), len, data)?;
        let ng = self.ng(a);
        Ok(self.push(out, Op::SliceCols(a, start), ng))
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let t = self.value(a);
        if start + len > t.rows() {
            return Err(NnError::Shape(format!(
                "row slice {start}..{} of {}",
                start + len,
                t.rows()
            )));
        }
        let c = t.cols();
        let out = Tensor::matrix(len, c, t.data()[start * c..(start + len) * c].to_vec())?;
        let ng = self.ng(a);
        Ok(self.push(out, Op::SliceRows(a, start), ng))
    }

    pub fn row(&mut self, a: Var, r: usize) -> Result<Var> {
        self.slice_rows(a, r, 1)
    }

    /// Sum of all entries as a 1×1 tensor.
    pub fn sum(&mut self, a: Var) -> Var {
        let out = Tensor::filled(1, 1, self.value(a).sum());
        let ng = self.ng(a);
        self.push(out, Op::SumAll(a), ng)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let n = self.value(a).len() as f64;
        let s = self.sum(a);
        self.scale(s, 1.0 / n)
    }

    /// Column sums (1×c).
    pub fn sum_rows(&mut self, a: Var) -> Var {
        let out = col_sums(self.value(a));
        let ng = self.ng(a);
        self.push(out, Op::SumRows(a), ng)
    }

    /// Row sums (r×1).
    pub fn sum_cols(&mut self, a: Var) -> Var {
        let out = row_sums(self.value(a));
        let ng = self.ng(a);
        self.push(out, Op::SumCols(a), ng)
    }

    /// Repeats a 1×c row `rows` times.
    pub fn broadcast_rows(&mut self, a: Var, rows: usize) -> Result<Var> {
        let t = self.value(a);
        if t.rows() != 1 {
            return Err(NnError::Shape("broadcast_rows needs a single row".into()));
        }
        let out = broadcast_row(t, rows);
        let ng = self.ng(a);
        Ok(self.push(out, Op::BroadcastRows(a), ng))
    }

    /// Repeats an r×1 column `cols` times.
    pub fn broadcast_cols(&mut self, a: Var, cols: usize) -> Result<Var> {
        let t = self.value(a);
        if t.cols() != 1 {
            return Err(NnError::Shape("broadcast_cols needs a single column".into()));
        }
        let out = broadcast_col(t, cols);
        let ng = self.ng(a);
        Ok(self.push(out, Op::BroadcastCols(a), ng))
    }

    /// Reverse pass from a scalar (1×1) output.
    pub fn backward(&self, output: Var) -> Result<Grads> {
        let out = self.value(output);
        if out.len() != 1 {
            return Err(NnError::Shape("backward needs a scalar output".into()));
        }
        if let Some(i) = self.nodes[..=output.0].iter().position(|n| !n.value.is_finite()) {
            return Err(NnError::NonFinite(format!("forward value at node {i}")));
        }
        let mut slots: Vec<Option<Tensor>> = vec![None; output.0 + 1];
        slots[output.0] = Some(Tensor::filled(1, 1, 1.0));
        for idx in (0..=output.0).rev() {
            let Some(gy) = slots[idx].take() else { continue };
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            self.propagate(node, &gy, &mut slots);
            slots[idx] = Some(gy);
        }
        Ok(Grads { slots })
    }

    /// Gradients for every parameter bound in this graph, in store order.
    /// Parameters that were never used get zero gradients.
    pub fn param_grads(&self, grads: &Grads) -> Vec<Tensor> {
        let store = self.store.expect("graph has no parameter store");
        (0..store.len())
            .map(|i| {
                let shaped = store.get(ParamId::from_index(i));
                match self.bound[i].and_then(|v| grads.get(v)) {
                    Some(g) => g.clone(),
                    None => Tensor::new(shaped.shape().to_vec(), vec![0.0; shaped.len()])
                        .expect("shape copied"),
                }
            })
            .collect()
    }

    fn propagate(&self, node: &Node, gy: &Tensor, slots: &mut [Option<Tensor>]) {
        let y = &node.value;
        let mut acc = |v: Var, g: Tensor| {
            if !self.nodes[v.0].needs_grad {
                return;
            }
            match &mut slots[v.0] {
                Some(s) => s.add_assign(&g),
                slot => *slot = Some(g),
            }
        };
        let val = |v: Var| &self.nodes[v.0].value;
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) | Op::SetMatMul(a, b) => {
                acc(*a, gy.matmul_t(val(*b)));
                acc(*b, val(*a).t_matmul(gy));
            }
            Op::Add(a, b) => {
                acc(*a, gy.clone());
                acc(*b, gy.clone());
            }
            Op::Sub(a, b) => {
                acc(*a, gy.clone());
                acc(*b, gy.map(|g| -g));
            }
            Op::Mul(a, b) => {
                acc(*a, gy.zip_map(val(*b), |g, y| g * y));
                acc(*b, gy.zip_map(val(*a), |g, x| g * x));
            }
            Op::AddRow(a, r) => {
                acc(*a, gy.clone());
                acc(*r, col_sums(gy));
            }
            Op::MulRow(a, r) => {
                let rv = broadcast_row(val(*r), gy.rows());
                acc(*a, gy.zip_map(&rv, |g, s| g * s));
                acc(*r, col_sums(&gy.zip_map(val(*a), |g, x| g * x)));
            }
            Op::MulCol(a, c) => {
                let cv = broadcast_col(val(*c), gy.cols());
                acc(*a, gy.zip_map(&cv, |g, s| g * s));
                acc(*c, row_sums(&gy.zip_map(val(*a), |g, x| g * x)));
            }
            Op::Scale(a, s) => acc(*a, gy.map(|g| g * s)),
            Op::AddScalar(a) => acc(*a, gy.clone()),
            Op::Sigmoid(a) => acc(*a, gy.zip_map(y, |g, s| g * s * (1.0 - s))),
            Op::Tanh(a) => acc(*a, gy.zip_map(y, |g, t| g * (1.0 - t * t))),
            Op::Relu(a) => acc(*a, gy.zip_map(val(*a), |g, x| if x > 0.0 { g } else { 0.0 })),
            Op::Exp(a) => acc(*a, gy.zip_map(y, |g, e| g * e)),
            Op::Log(a) => acc(*a, gy.zip_map(val(*a), |g, x| g / x)),
            Op::Sqrt(a) => acc(*a, gy.zip_map(y, |g, s| if s > 0.0 { 0.5 * g / s } else { 0.0 })),
            Op::Square(a) => acc(*a, gy.zip_map(val(*a), |g, x| 2.0 * g * x)),
            Op::Recip(a) => acc(*a, gy.zip_map(y, |g, r| -g * r * r)),
            Op::ClampMin(a, m) => {
                let m = *m;
                acc(*a, gy.zip_map(val(*a), |g, x| if x > m { g } else { 0.0 }))
            }
            Op::Softmax(a) => {
                let c = y.cols();
                let mut gx = gy.clone();
                for r in 0..y.rows() {
                    let (yr, gr) = (y.row(r), gy.row(r));
                    let dot: f64 = yr.iter().zip(gr).map(|(p, g)| p * g).sum();
                    for j in 0..c {
                        gx.data_mut()[r * c + j] = yr[j] * (gr[j] - dot);
                    }
                }
                acc(*a, gx);
            }
            Op::LogSoftmax(a) => {
                let c = y.cols();
                let mut gx = gy.clone();
                for r in 0..y.rows() {
                    let total: f64 = gy.row(r).iter().sum();
                    for j in 0..c {
                        let i = r * c + j;
                        gx.data_mut()[i] = gy.data()[i] - y.data()[i].exp() * total;
                    }
                }
                acc(*a, gx);
            }
            Op::LogSumExp(a) => {
                let x = val(*a);
                let c = x.cols();
                let mut gx = x.clone();
                for (i, v) in gx.data_mut().iter_mut().enumerate() {
                    let r = i / c;
                    *v = gy.data()[r] * (*v - y.data()[r]).exp();
                }
                acc(*a, gx);
            }
            Op::Normalize { x, groups, inv_std } => {
                let size = y.cols() / groups;
                let n = size as f64;
                let mut gx = gy.clone();
                for (k, chunk) in gx.data_mut().chunks_mut(size).enumerate() {
                    let yh = &y.data()[k * size..(k + 1) * size];
                    let sum_g: f64 = chunk.iter().sum();
                    let sum_gy: f64 = chunk.iter().zip(yh).map(|(g, h)| g * h).sum();
                    let s = inv_std[k];
                    for (g, h) in chunk.iter_mut().zip(yh) {
                        *g = s / n * (n * *g - sum_g - h * sum_gy);
                    }
                }
                acc(*x, gx);
            }
            Op::Transpose(a) => acc(*a, gy.transpose()),
            Op::Reshape(a) => {
                let x = val(*a);
                acc(*a, Tensor::matrix(x.rows(), x.cols(), gy.data().to_vec()).expect("same length"));
            }
            Op::ConcatCols(parts) => {
                let mut start = 0;
                for &p in parts {
                    let w = val(p).cols();
                    let mut data = Vec::with_capacity(gy.rows() * w);
                    for r in 0..gy.rows() {
                        data.extend_from_slice(&gy.row(r)[start..start + w]);
                    }
                    acc(p, Tensor::matrix(gy.rows(), w, data).expect("shape computed"));
                    start += w;
                }
            }
            Op::ConcatRows(parts) => {
                let c = gy.cols();
                let mut start = 0;
                for &p in parts {
                    let h = val(p).rows();
                    let data = gy.data()[start * c..(start + h) * c].to_vec();
                    acc(p, Tensor::matrix(h, c, data).expect("shape computed"));
                    start += h;
                }
            }
            Op::SliceCols(a, start) => {
                let x = val(*a);
                let mut gx = Tensor::zeros(x.rows(), x.cols());
                let (c, w) = (x.cols(), gy.cols());
                for r in 0..gy.rows() {
                    gx.data_mut()[r * c + start..r * c + start + w].copy_from_slice(gy.row(r));
                }
                acc(*a, gx);
            }
            Op::SliceRows(a, start) => {
                let x = val(*a);
                let mut gx = Tensor::zeros(x.rows(), x.cols());
                let c = x.cols();
                gx.data_mut()[start * c..start * c + gy.len()].copy_from_slice(gy.data());
                acc(*a, gx);
            }
            Op::SumAll(a) => {
                let x = val(*a);
                acc(*a, Tensor::filled(x.rows(), x.cols(), gy.data()[0]));
            }
            Op::SumRows(a) => acc(*a, broadcast_row(gy, val(*a).rows())),
            Op::SumCols(a) => acc(*a, broadcast_col(gy, val(*a).cols())),
            Op::BroadcastRows(a) => acc(*a, col_sums(gy)),
            Op::BroadcastCols(a) => acc(*a, row_sums(gy)),
        }
    }
}

impl Default for Graph<'_> {
    fn default() -> Self {
        Self::new()
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn logsumexp_rows(t: &Tensor) -> Vec<f64> {
    (0..t.rows())
        .map(|r| {
            let row = t.row(r);
            let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if m == f64::NEG_INFINITY {
                return m;
            }
            m + set_sum(row.iter().map(|v| (v - m).exp())).ln()
        })
        .collect()
}

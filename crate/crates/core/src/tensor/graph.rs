//! Tape-style reverse-mode differentiation over dense matrices.
//!
//! A [`Graph`] is an append-only arena of nodes. Every operation pushes one
//! node whose parents already live in the arena, so node order is a
//! topological order and [`Graph::backward`] is a single reverse sweep.
//! Graphs are rebuilt for every forward pass.
//!
//! Broadcasting: the binary elementwise ops (`add`, `sub`, `mul`) accept a
//! right operand of shape `1 x cols` against a left operand of shape
//! `rows x cols`, repeating the row vector over every row. No other
//! broadcast form is accepted.
//!
//! Subgradients at kinks: `relu` and `abs` use 0 at exactly 0.

use std::collections::hash_map::DefaultHasher;
use std::collections::HashMap;
use std::fmt;
use std::hash::{Hash, Hasher};

use thiserror::Error;

use super::matrix::{gemm, Matrix};
use super::params::{ParamId, ParamStore};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TensorError {
    #[error("{op}: dimension mismatch between {left:?} and {right:?}")]
    Shape {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("concat: no input tensors")]
    EmptyConcat,
    #[error("{op}: invalid axis or grouping for shape {shape:?}")]
    InvalidAxis { op: &'static str, shape: (usize, usize) },
    #[error("backward: loss must be 1x1, got {0:?}")]
    NonScalarLoss((usize, usize)),
    #[error("non-finite gradient in parameter `{0}`")]
    NonFiniteGradient(String),
    #[error("{op}: non-finite value")]
    NonFinite { op: &'static str },
}

pub type Result<T> = std::result::Result<T, TensorError>;

/// Handle to a node in a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TensorId(usize);

impl TensorId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Reduction / concatenation axis. `Rows` collapses or stacks rows
/// (`sum` over `Rows` of an `m x n` matrix is `1 x n`), `Cols` does the same
/// for columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    Rows,
    Cols,
}

/// A differentiable operation defined outside this module.
///
/// Implementors supply the forward value and the vector-Jacobian product.
pub trait CustomOp: fmt::Debug {
    fn name(&self) -> &'static str;

    fn forward(&self, inputs: &[&Matrix]) -> Result<Matrix>;

    /// Gradient with respect to each input given the output gradient.
    /// `None` marks an input the op does not differentiate through.
    fn backward(&self, inputs: &[&Matrix], output: &Matrix, grad: &Matrix) -> Vec<Option<Matrix>>;

    /// Feeds the discrete branch the forward pass took (supports, active
    /// sets) into `state`. Used to detect finite-difference probes that
    /// cross a kink.
    fn hash_branches(&self, _inputs: &[&Matrix], _output: &Matrix, _state: &mut DefaultHasher) {}
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(TensorId, TensorId),
    Add(TensorId, TensorId),
    Sub(TensorId, TensorId),
    Mul(TensorId, TensorId),
    Relu(TensorId),
    Abs(TensorId),
    Exp(TensorId),
    Scale(TensorId, f64),
    ScaleBy(TensorId, TensorId),
    Clamp(TensorId, f64, f64),
    Minimum(TensorId, TensorId),
    Concat(Vec<TensorId>, Axis),
    Sum(TensorId, Option<Axis>),
    Mean(TensorId, Option<Axis>),
    Reshape(TensorId),
    LogSoftmaxRows(TensorId),
    SegmentMean(TensorId, usize),
    GroupedScores(TensorId, TensorId, usize),
    GroupedMix(TensorId, TensorId, usize),
    Custom(Box<dyn CustomOp>, Vec<TensorId>),
}

struct Node {
    value: Matrix,
    grad: Option<Matrix>,
    op: Op,
    requires_grad: bool,
}

#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
    bound: HashMap<ParamId, TensorId>,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: TensorId) -> &Matrix {
        &self.nodes[id.0].value
    }

    pub fn shape(&self, id: TensorId) -> (usize, usize) {
        self.nodes[id.0].value.shape()
    }

    pub fn grad(&self, id: TensorId) -> Option<&Matrix> {
        self.nodes[id.0].grad.as_ref()
    }

    pub fn requires_grad(&self, id: TensorId) -> bool {
        self.nodes[id.0].requires_grad
    }

    /// Leaf that receives gradients.
    pub fn variable(&mut self, value: Matrix) -> TensorId {
        self.push(value, Op::Leaf, true)
    }

    /// Leaf that never receives gradients.
    pub fn constant(&mut self, value: Matrix) -> TensorId {
        self.push(value, Op::Leaf, false)
    }

    /// Binds a stored parameter as a gradient-tracking leaf. Binding the same
    /// parameter twice returns the same node.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> TensorId {
        if let Some(&t) = self.bound.get(&id) {
            return t;
        }
        let t = self.variable(store.value(id).clone());
        self.bound.insert(id, t);
        t
    }

    /// Gradients of every bound parameter, indexed like the store.
    pub fn param_grads(&self, store: &ParamStore) -> Vec<Option<Matrix>> {
        (0..store.len())
            .map(|i| {
                self.bound
                    .get(&ParamId(i))
                    .and_then(|t| self.nodes[t.0].grad.clone())
            })
            .collect()
    }

    fn push(&mut self, value: Matrix, op: Op, requires_grad: bool) -> TensorId {
        self.nodes.push(Node { value, grad: None, op, requires_grad });
        TensorId(self.nodes.len() - 1)
    }

    fn any_grad(&self, ids: &[TensorId]) -> bool {
        ids.iter().any(|t| self.nodes[t.0].requires_grad)
    }

    pub fn matmul(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.cols() != bv.rows() {
            return Err(TensorError::Shape { op: "matmul", left: av.shape(), right: bv.shape() });
        }
        let out = av.matmul(bv);
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(out, Op::MatMul(a, b), rg))
    }

    fn broadcast_check(&self, op: &'static str, a: TensorId, b: TensorId) -> Result<()> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa == sb || (sb.0 == 1 && sb.1 == sa.1) {
            Ok(())
        } else {
            Err(TensorError::Shape { op, left: sa, right: sb })
        }
    }

    fn binary(
        &mut self,
        op: &'static str,
        a: TensorId,
        b: TensorId,
        f: impl Fn(f64, f64) -> f64,
        make: fn(TensorId, TensorId) -> Op,
    ) -> Result<TensorId> {
        self.broadcast_check(op, a, b)?;
        let (av, bv) = (self.value(a), self.value(b));
        let mut out = av.clone();
        let cols = av.cols();
        let bdata = bv.as_slice();
        let broadcast = bv.rows() != av.rows() || av.rows() == 1;
        for (k, x) in out.as_mut_slice().iter_mut().enumerate() {
            let y = if broadcast { bdata[k % cols] } else { bdata[k] };
            *x = f(*x, y);
        }
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(out, make(a, b), rg))
    }

    pub fn add(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        self.binary("add", a, b, |x, y| x + y, Op::Add)
    }

    pub fn sub(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        self.binary("sub", a, b, |x, y| x - y, Op::Sub)
    }

    pub fn mul(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        self.binary("mul", a, b, |x, y| x * y, Op::Mul)
    }

    pub fn relu(&mut self, a: TensorId) -> TensorId {
        let out = self.value(a).map(|x| if x > 0.0 { x } else { 0.0 });
        let rg = self.requires_grad(a);
        self.push(out, Op::Relu(a), rg)
    }

    pub fn abs(&mut self, a: TensorId) -> TensorId {
        let out = self.value(a).map(f64::abs);
        let rg = self.requires_grad(a);
        self.push(out, Op::Abs(a), rg)
    }

    pub fn exp(&mut self, a: TensorId) -> TensorId {
        let out = self.value(a).map(f64::exp);
        let rg = self.requires_grad(a);
        self.push(out, Op::Exp(a), rg)
    }

    pub fn scale(&mut self, a: TensorId, factor: f64) -> TensorId {
        let out = self.value(a).map(|x| x * factor);
        let rg = self.requires_grad(a);
        self.push(out, Op::Scale(a, factor), rg)
    }

    pub fn neg(&mut self, a: TensorId) -> TensorId {
        self.scale(a, -1.0)
    }

    /// Multiplies every entry of `a` by the 1x1 tensor `s`.
    pub fn scale_by(&mut self, a: TensorId, s: TensorId) -> Result<TensorId> {
        if self.shape(s) != (1, 1) {
            return Err(TensorError::Shape { op: "scale_by", left: self.shape(a), right: self.shape(s) });
        }
        let factor = self.value(s).item();
        let out = self.value(a).map(|x| x * factor);
        let rg = self.any_grad(&[a, s]);
        Ok(self.push(out, Op::ScaleBy(a, s), rg))
    }

    /// Clamps into `[lo, hi]`; gradient passes where `lo <= x <= hi`.
    pub fn clamp(&mut self, a: TensorId, lo: f64, hi: f64) -> TensorId {
        let out = self.value(a).map(|x| x.clamp(lo, hi));
        let rg = self.requires_grad(a);
        self.push(out, Op::Clamp(a, lo, hi), rg)
    }

    /// Elementwise minimum; ties route the gradient to `a`.
    pub fn minimum(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        if self.shape(a) != self.shape(b) {
            return Err(TensorError::Shape { op: "minimum", left: self.shape(a), right: self.shape(b) });
        }
        let out = self.value(a).zip_map(self.value(b), |x, y| if x <= y { x } else { y });
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(out, Op::Minimum(a, b), rg))
    }

    pub fn concat(&mut self, parts: &[TensorId], axis: Axis) -> Result<TensorId> {
        let first = *parts.first().ok_or(TensorError::EmptyConcat)?;
        let (r0, c0) = self.shape(first);
        for &p in &parts[1..] {
            let (r, c) = self.shape(p);
            let ok = match axis {
                Axis::Cols => r == r0,
                Axis::Rows => c == c0,
            };
            if !ok {
                return Err(TensorError::Shape { op: "concat", left: (r0, c0), right: (r, c) });
            }
        }
        let out = match axis {
            Axis::Cols => {
                let total: usize = parts.iter().map(|&p| self.shape(p).1).sum();
                let mut out = Matrix::zeros(r0, total);
                for r in 0..r0 {
                    let mut offset = 0;
                    for &p in parts {
                        let row = self.value(p).row(r);
                        out.row_mut(r)[offset..offset + row.len()].copy_from_slice(row);
                        offset += row.len();
                    }
                }
                out
            }
            Axis::Rows => {
                let total: usize = parts.iter().map(|&p| self.shape(p).0).sum();
                let mut data = Vec::with_capacity(total * c0);
                for &p in parts {
                    data.extend_from_slice(self.value(p).as_slice());
                }
                Matrix::from_vec(total, c0, data)
            }
        };
        let rg = self.any_grad(parts);
        Ok(self.push(out, Op::Concat(parts.to_vec(), axis), rg))
    }

    fn reduce_value(m: &Matrix, axis: Option<Axis>) -> Matrix {
        match axis {
            None => Matrix::scalar(m.sum()),
            Some(Axis::Rows) => {
                let mut out = Matrix::zeros(1, m.cols());
                for r in 0..m.rows() {
                    for (o, x) in out.as_mut_slice().iter_mut().zip(m.row(r)) {
                        *o += x;
                    }
                }
                out
            }
            Some(Axis::Cols) => {
                Matrix::from_vec(m.rows(), 1, (0..m.rows()).map(|r| m.row(r).iter().sum()).collect())
            }
        }
    }

    fn reduce_count(shape: (usize, usize), axis: Option<Axis>) -> usize {
        match axis {
            None => shape.0 * shape.1,
            Some(Axis::Rows) => shape.0,
            Some(Axis::Cols) => shape.1,
        }
    }

    /// Sum over `axis`, or over all entries when `axis` is `None`.
    pub fn sum(&mut self, a: TensorId, axis: Option<Axis>) -> TensorId {
        let out = Self::reduce_value(self.value(a), axis);
        let rg = self.requires_grad(a);
        self.push(out, Op::Sum(a, axis), rg)
    }

    pub fn mean(&mut self, a: TensorId, axis: Option<Axis>) -> Result<TensorId> {
        let n = Self::reduce_count(self.shape(a), axis);
        if n == 0 {
            return Err(TensorError::InvalidAxis { op: "mean", shape: self.shape(a) });
        }
        let mut out = Self::reduce_value(self.value(a), axis);
        out.scale_in_place(1.0 / n as f64);
        let rg = self.requires_grad(a);
        Ok(self.push(out, Op::Mean(a, axis), rg))
    }

    /// Row-major reshape.
    pub fn reshape(&mut self, a: TensorId, rows: usize, cols: usize) -> Result<TensorId> {
        let v = self.value(a);
        if v.len() != rows * cols {
            return Err(TensorError::Shape { op: "reshape", left: v.shape(), right: (rows, cols) });
        }
        let out = Matrix::from_vec(rows, cols, v.as_slice().to_vec());
        let rg = self.requires_grad(a);
        Ok(self.push(out, Op::Reshape(a), rg))
    }

    pub fn log_softmax_rows(&mut self, a: TensorId) -> TensorId {
        let v = self.value(a);
        let mut out = v.clone();
        for r in 0..v.rows() {
            let row = out.row_mut(r);
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
            for x in row.iter_mut() {
                *x -= lse;
            }
        }
        let rg = self.requires_grad(a);
        self.push(out, Op::LogSoftmaxRows(a), rg)
    }

    /// Mean over consecutive blocks of `group` rows: `(m*group) x d -> m x d`.
    pub fn segment_mean(&mut self, a: TensorId, group: usize) -> Result<TensorId> {
        let (rows, cols) = self.shape(a);
        if group == 0 || rows % group != 0 {
            return Err(TensorError::InvalidAxis { op: "segment_mean", shape: (rows, cols) });
        }
        let v = self.value(a);
        let mut out = Matrix::zeros(rows / group, cols);
        let inv = 1.0 / group as f64;
        for r in 0..rows {
            let dst = out.row_mut(r / group);
            for (o, x) in dst.iter_mut().zip(v.row(r)) {
                *o += x * inv;
            }
        }
        let rg = self.requires_grad(a);
        Ok(self.push(out, Op::SegmentMean(a, group), rg))
    }

    /// Block-diagonal scores: rows are split into blocks of `group`; within
    /// block `b`, `out[b*group + i][j] = q[b*group + i] . k[b*group + j]`.
    pub fn grouped_scores(&mut self, q: TensorId, k: TensorId, group: usize) -> Result<TensorId> {
        let (qs, ks) = (self.shape(q), self.shape(k));
        if qs != ks {
            return Err(TensorError::Shape { op: "grouped_scores", left: qs, right: ks });
        }
        if group == 0 || qs.0 % group != 0 {
            return Err(TensorError::InvalidAxis { op: "grouped_scores", shape: qs });
        }
        let (qv, kv) = (self.value(q), self.value(k));
        let mut out = Matrix::zeros(qs.0, group);
        for r in 0..qs.0 {
            let base = r - r % group;
            let qr = qv.row(r);
            for j in 0..group {
                out[(r, j)] = dot(qr, kv.row(base + j));
            }
        }
        let rg = self.any_grad(&[q, k]);
        Ok(self.push(out, Op::GroupedScores(q, k, group), rg))
    }

    /// Block-diagonal mixing: `out[b*group + i] = sum_j w[b*group + i][j] * v[b*group + j]`.
    /// Zero weights are skipped, so masked entries contribute nothing at all.
    pub fn grouped_mix(&mut self, w: TensorId, v: TensorId, group: usize) -> Result<TensorId> {
        let (ws, vs) = (self.shape(w), self.shape(v));
        if ws.0 != vs.0 || ws.1 != group {
            return Err(TensorError::Shape { op: "grouped_mix", left: ws, right: vs });
        }
        if group == 0 || ws.0 % group != 0 {
            return Err(TensorError::InvalidAxis { op: "grouped_mix", shape: ws });
        }
        let (wv, vv) = (self.value(w), self.value(v));
        let mut out = Matrix::zeros(vs.0, vs.1);
        for r in 0..ws.0 {
            let base = r - r % group;
            for j in 0..group {
                let wij = wv[(r, j)];
                if wij == 0.0 {
                    continue;
                }
                let src = vv.row(base + j);
                for (o, x) in out.row_mut(r).iter_mut().zip(src) {
                    *o += wij * x;
                }
            }
        }
        let rg = self.any_grad(&[w, v]);
        Ok(self.push(out, Op::GroupedMix(w, v, group), rg))
    }

    pub fn custom(&mut self, op: Box<dyn CustomOp>, inputs: &[TensorId]) -> Result<TensorId> {
        let values: Vec<&Matrix> = inputs.iter().map(|&t| self.value(t)).collect();
        let out = op.forward(&values)?;
        let rg = self.any_grad(inputs);
        Ok(self.push(out, Op::Custom(op, inputs.to_vec()), rg))
    }

    /// Hash of every discrete branch taken in the forward pass: relu/abs
    /// signs, clamp and minimum selections, and custom-op branches. Two
    /// forward passes with equal signatures are on the same smooth piece.
    pub fn branch_signature(&self) -> u64 {
        let mut h = DefaultHasher::new();
        for node in &self.nodes {
            match &node.op {
                Op::Relu(a) | Op::Abs(a) => {
                    for &x in self.nodes[a.0].value.as_slice() {
                        (x > 0.0, x < 0.0).hash(&mut h);
                    }
                }
                Op::Clamp(a, lo, hi) => {
                    for &x in self.nodes[a.0].value.as_slice() {
                        (x < *lo, x > *hi).hash(&mut h);
                    }
                }
                Op::Minimum(a, b) => {
                    let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
                    for (x, y) in av.as_slice().iter().zip(bv.as_slice()) {
                        (x <= y).hash(&mut h);
                    }
                }
                Op::Custom(op, inputs) => {
                    let values: Vec<&Matrix> = inputs.iter().map(|t| &self.nodes[t.0].value).collect();
                    op.hash_branches(&values, &node.value, &mut h);
                }
                _ => {}
            }
        }
        h.finish()
    }

    /// Accumulates `d loss / d leaf` into every reachable gradient-tracking
    /// leaf. Intermediate gradients are recomputed on each call, while leaf
    /// gradients accumulate across calls until [`Graph::zero_grad`].
    pub fn backward(&mut self, loss: TensorId) -> Result<()> {
        let shape = self.shape(loss);
        if shape != (1, 1) {
            return Err(TensorError::NonScalarLoss(shape));
        }
        for node in &mut self.nodes {
            if !matches!(node.op, Op::Leaf) {
                node.grad = None;
            }
        }
        accumulate(&mut self.nodes[loss.0], Matrix::scalar(1.0));
        for i in (0..=loss.0).rev() {
            let node = &mut self.nodes[i];
            if !node.requires_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(grad) = node.grad.take() else { continue };
            let contributions = self.local_backward(i, &grad);
            self.nodes[i].grad = Some(grad);
            for (parent, g) in contributions {
                let p = &mut self.nodes[parent.0];
                if p.requires_grad {
                    accumulate(p, g);
                }
            }
        }
        Ok(())
    }

    pub fn zero_grad(&mut self) {
        for node in &mut self.nodes {
            node.grad = None;
        }
    }

    fn local_backward(&self, i: usize, grad: &Matrix) -> Vec<(TensorId, Matrix)> {
        let node = &self.nodes[i];
        let val = |t: TensorId| &self.nodes[t.0].value;
        let rg = |t: TensorId| self.nodes[t.0].requires_grad;
        let mut out = Vec::new();
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (av, bv) = (val(*a), val(*b));
                if rg(*a) {
                    let mut ga = Matrix::zeros(av.rows(), av.cols());
                    gemm(grad.view(), bv.view_t(), &mut ga, 0.0);
                    out.push((*a, ga));
                }
                if rg(*b) {
                    let mut gb = Matrix::zeros(bv.rows(), bv.cols());
                    gemm(av.view_t(), grad.view(), &mut gb, 0.0);
                    out.push((*b, gb));
                }
            }
            Op::Add(a, b) | Op::Sub(a, b) => {
                let sign = if matches!(node.op, Op::Sub(..)) { -1.0 } else { 1.0 };
                if rg(*a) {
                    out.push((*a, grad.clone()));
                }
                if rg(*b) {
                    let mut gb = unbroadcast(grad, val(*b).shape());
                    gb.scale_in_place(sign);
                    out.push((*b, gb));
                }
            }
            Op::Mul(a, b) => {
                let (av, bv) = (val(*a), val(*b));
                let cols = av.cols();
                let broadcast = bv.rows() != av.rows() || av.rows() == 1;
                if rg(*a) {
                    let mut ga = grad.clone();
                    for (k, g) in ga.as_mut_slice().iter_mut().enumerate() {
                        *g *= if broadcast { bv.as_slice()[k % cols] } else { bv.as_slice()[k] };
                    }
                    out.push((*a, ga));
                }
                if rg(*b) {
                    let full = grad.zip_map(av, |g, x| g * x);
                    out.push((*b, unbroadcast(&full, bv.shape())));
                }
            }
            Op::Relu(a) => {
                out.push((*a, grad.zip_map(val(*a), |g, x| if x > 0.0 { g } else { 0.0 })));
            }
            Op::Abs(a) => {
                let sign = |x: f64| {
                    if x > 0.0 {
                        1.0
                    } else if x < 0.0 {
                        -1.0
                    } else {
                        0.0
                    }
                };
                out.push((*a, grad.zip_map(val(*a), |g, x| g * sign(x))));
            }
            Op::Exp(a) => {
                out.push((*a, grad.zip_map(&node.value, |g, y| g * y)));
            }
            Op::Scale(a, f) => {
                out.push((*a, grad.map(|g| g * f)));
            }
            Op::ScaleBy(a, s) => {
                let factor = val(*s).item();
                if rg(*a) {
                    out.push((*a, grad.map(|g| g * factor)));
                }
                if rg(*s) {
                    let d: f64 = grad.as_slice().iter().zip(val(*a).as_slice()).map(|(g, x)| g * x).sum();
                    out.push((*s, Matrix::scalar(d)));
                }
            }
            Op::Clamp(a, lo, hi) => {
                out.push((*a, grad.zip_map(val(*a), |g, x| if x >= *lo && x <= *hi { g } else { 0.0 })));
            }
            Op::Minimum(a, b) => {
                let (av, bv) = (val(*a), val(*b));
                let pick_a: Vec<bool> = av.as_slice().iter().zip(bv.as_slice()).map(|(x, y)| x <= y).collect();
                if rg(*a) {
                    let mut ga = grad.clone();
                    for (g, &p) in ga.as_mut_slice().iter_mut().zip(&pick_a) {
                        if !p {
                            *g = 0.0;
                        }
                    }
                    out.push((*a, ga));
                }
                if rg(*b) {
                    let mut gb = grad.clone();
                    for (g, &p) in gb.as_mut_slice().iter_mut().zip(&pick_a) {
                        if p {
                            *g = 0.0;
                        }
                    }
                    out.push((*b, gb));
                }
            }
            Op::Concat(parts, axis) => {
                let mut offset = 0;
                for &p in parts {
                    let (r, c) = val(p).shape();
                    if rg(p) {
                        let g = match axis {
                            Axis::Cols => {
                                let mut g = Matrix::zeros(r, c);
                                for row in 0..r {
                                    g.row_mut(row).copy_from_slice(&grad.row(row)[offset..offset + c]);
                                }
                                g
                            }
                            Axis::Rows => grad.slice_rows(offset, r),
                        };
                        out.push((p, g));
                    }
                    offset += match axis {
                        Axis::Cols => c,
                        Axis::Rows => r,
                    };
                }
            }
            Op::Sum(a, axis) | Op::Mean(a, axis) => {
                let shape = val(*a).shape();
                let factor = if matches!(node.op, Op::Mean(..)) {
                    1.0 / Self::reduce_count(shape, *axis) as f64
                } else {
                    1.0
                };
                let mut g = Matrix::zeros(shape.0, shape.1);
                for r in 0..shape.0 {
                    for c in 0..shape.1 {
                        let up = match axis {
                            None => grad[(0, 0)],
                            Some(Axis::Rows) => grad[(0, c)],
                            Some(Axis::Cols) => grad[(r, 0)],
                        };
                        g[(r, c)] = up * factor;
                    }
                }
                out.push((*a, g));
            }
            Op::Reshape(a) => {
                let (r, c) = val(*a).shape();
                out.push((*a, Matrix::from_vec(r, c, grad.as_slice().to_vec())));
            }
            Op::LogSoftmaxRows(a) => {
                let mut g = grad.clone();
                for r in 0..g.rows() {
                    let total: f64 = grad.row(r).iter().sum();
                    for (gx, y) in g.row_mut(r).iter_mut().zip(node.value.row(r)) {
                        *gx -= y.exp() * total;
                    }
                }
                out.push((*a, g));
            }
            Op::SegmentMean(a, group) => {
                let (r, c) = val(*a).shape();
                let inv = 1.0 / *group as f64;
                let mut g = Matrix::zeros(r, c);
                for row in 0..r {
                    for (gx, up) in g.row_mut(row).iter_mut().zip(grad.row(row / group)) {
                        *gx = up * inv;
                    }
                }
                out.push((*a, g));
            }
            Op::GroupedScores(q, k, group) => {
                let (qv, kv) = (val(*q), val(*k));
                let (rows, d) = qv.shape();
                let mut gq = Matrix::zeros(rows, d);
                let mut gk = Matrix::zeros(rows, d);
                for r in 0..rows {
                    let base = r - r % group;
                    for j in 0..*group {
                        let up = grad[(r, j)];
                        if up == 0.0 {
                            continue;
                        }
                        axpy(gq.row_mut(r), up, kv.row(base + j));
                        axpy(gk.row_mut(base + j), up, qv.row(r));
                    }
                }
                if rg(*q) {
                    out.push((*q, gq));
                }
                if rg(*k) {
                    out.push((*k, gk));
                }
            }
            Op::GroupedMix(w, v, group) => {
                let (wv, vv) = (val(*w), val(*v));
                let rows = wv.rows();
                if rg(*w) {
                    let mut gw = Matrix::zeros(rows, *group);
                    for r in 0..rows {
                        let base = r - r % group;
                        for j in 0..*group {
                            gw[(r, j)] = dot(grad.row(r), vv.row(base + j));
                        }
                    }
                    out.push((*w, gw));
                }
                if rg(*v) {
                    let mut gv = Matrix::zeros(vv.rows(), vv.cols());
                    for r in 0..rows {
                        let base = r - r % group;
                        for j in 0..*group {
                            let wij = wv[(r, j)];
                            if wij != 0.0 {
                                axpy(gv.row_mut(base + j), wij, grad.row(r));
                            }
                        }
                    }
                    out.push((*v, gv));
                }
            }
            Op::Custom(op, inputs) => {
                let values: Vec<&Matrix> = inputs.iter().map(|&t| val(t)).collect();
                for (t, g) in inputs.iter().zip(op.backward(&values, &node.value, grad)) {
                    if let Some(g) = g {
                        if rg(*t) {
                            out.push((*t, g));
                        }
                    }
                }
            }
        }
        out
    }
}

fn accumulate(node: &mut Node, g: Matrix) {
    match &mut node.grad {
        Some(existing) => existing.add_assign(&g),
        None => node.grad = Some(g),
    }
}

fn unbroadcast(grad: &Matrix, shape: (usize, usize)) -> Matrix {
    if grad.shape() == shape {
        return grad.clone();
    }
    let mut out = Matrix::zeros(1, shape.1);
    for r in 0..grad.rows() {
        for (o, g) in out.as_mut_slice().iter_mut().zip(grad.row(r)) {
            *o += g;
        }
    }
    out
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
fn axpy(dst: &mut [f64], alpha: f64, src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += alpha * s;
    }
}

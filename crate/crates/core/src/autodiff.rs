//! Tape-based reverse-mode differentiation.
//!
//! A [`Graph`] records every operation as a node whose parents were created
//! before it, so creation order is already a topological order and the
//! backward pass is a single reverse sweep. [`Var`] is a cheap handle into the
//! graph; values are immutable once recorded.
//!
//! [`Graph::custom_gradient`] substitutes an identity Jacobian: the forward
//! value is taken verbatim while the incoming gradient is routed unchanged to
//! a surrogate node. This is the straight-through estimator used by the
//! spike-and-slab gate.

use std::cell::RefCell;
use std::rc::Rc;

use crate::error::{Error, Result};
use crate::tensor::{matmul_nt_into, matmul_tn_into, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum UnaryOp {
    Exp,
    Log,
    Sigmoid,
    Silu,
    Relu,
    Softplus,
    Square,
    Neg,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReduceOp {
    Sum,
    Mean,
    Max,
}

#[derive(Debug)]
enum Op {
    Leaf,
    Unary(UnaryOp, usize),
    Binary(BinaryOp, usize, usize),
    Scale(usize, f64),
    Offset(usize),
    ClampMin(usize, f64),
    MatMul(usize, usize),
    AddBias(usize, usize),
    Reduce(ReduceOp, usize, Option<usize>),
    SliceCols(usize, usize),
    ConcatCols(Vec<usize>),
    CustomGradient(usize),
    Gate(usize, usize),
}

struct Node {
    value: Rc<Tensor>,
    op: Op,
    /// Whether any trainable leaf is upstream.
    tracked: bool,
}

impl Op {
    fn parents(&self) -> Vec<usize> {
        match self {
            Op::Leaf => Vec::new(),
            Op::Unary(_, a)
            | Op::Scale(a, _)
            | Op::Offset(a)
            | Op::ClampMin(a, _)
            | Op::Reduce(_, a, _)
            | Op::SliceCols(a, _)
            | Op::CustomGradient(a) => vec![*a],
            Op::Binary(_, a, b) | Op::MatMul(a, b) | Op::AddBias(a, b) | Op::Gate(a, b) => vec![*a, *b],
            Op::ConcatCols(parts) => parts.clone(),
        }
    }
}

#[derive(Default)]
pub struct Graph {
    nodes: RefCell<Vec<Node>>,
}

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy)]
pub struct Var<'g> {
    graph: &'g Graph,
    id: usize,
}

impl std::fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Var#{}({:?})", self.id, self.value())
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn unary_forward(op: UnaryOp, x: f64) -> f64 {
    match op {
        UnaryOp::Exp => x.exp(),
        UnaryOp::Log => x.ln(),
        UnaryOp::Sigmoid => sigmoid(x),
        UnaryOp::Silu => x * sigmoid(x),
        UnaryOp::Relu => x.max(0.0),
        UnaryOp::Softplus => softplus(x),
        UnaryOp::Square => x * x,
        UnaryOp::Neg => -x,
    }
}

/// d(op)/dx given the input `x` and the output `y`.
fn unary_derivative(op: UnaryOp, x: f64, y: f64) -> f64 {
    match op {
        UnaryOp::Exp => y,
        UnaryOp::Log => 1.0 / x,
        UnaryOp::Sigmoid => y * (1.0 - y),
        UnaryOp::Silu => {
            let s = sigmoid(x);
            s * (1.0 + x * (1.0 - s))
        }
        UnaryOp::Relu => {
            if x > 0.0 {
                1.0
            } else {
                0.0
            }
        }
        UnaryOp::Softplus => sigmoid(x),
        UnaryOp::Square => 2.0 * x,
        UnaryOp::Neg => -1.0,
    }
}

fn binary_forward(op: BinaryOp, a: f64, b: f64) -> f64 {
    match op {
        BinaryOp::Add => a + b,
        BinaryOp::Sub => a - b,
        BinaryOp::Mul => a * b,
        BinaryOp::Div => a / b,
    }
}

fn require_matrix(op: &'static str, t: &Tensor) -> Result<(usize, usize)> {
    if t.rank() != 2 {
        return Err(Error::Domain {
            op,
            reason: format!("expected a matrix, got shape {:?}", t.shape()),
        });
    }
    Ok((t.shape()[0], t.shape()[1]))
}

/// (outer, len, inner) strides for reducing `shape` along `axis`.
fn axis_split(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

fn reduced_shape(shape: &[usize], axis: usize) -> Vec<usize> {
    let mut s: Vec<usize> = shape.to_vec();
    s.remove(axis);
    if s.is_empty() {
        s.push(1);
    }
    s
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, value: Tensor, op: Op) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        let tracked = op.parents().iter().any(|&p| nodes[p].tracked);
        nodes.push(Node {
            value: Rc::new(value),
            op,
            tracked,
        });
        Var {
            graph: self,
            id: nodes.len() - 1,
        }
    }

    fn value_of(&self, id: usize) -> Rc<Tensor> {
        Rc::clone(&self.nodes.borrow()[id].value)
    }

    /// Trainable input node. Gradients are reported for every leaf.
    pub fn leaf(&self, value: Tensor) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value: Rc::new(value),
            op: Op::Leaf,
            tracked: true,
        });
        Var {
            graph: self,
            id: nodes.len() - 1,
        }
    }

    /// Input node that never receives a gradient.
    pub fn constant(&self, value: Tensor) -> Var<'_> {
        self.push(value, Op::Leaf)
    }

    pub fn scalar(&self, value: f64) -> Var<'_> {
        self.leaf(Tensor::scalar(value))
    }

    pub fn unary<'g>(&'g self, op: UnaryOp, a: Var<'g>) -> Result<Var<'g>> {
        let x = a.value();
        if op == UnaryOp::Log {
            if let Some(bad) = x.data().iter().find(|v| !(**v > 0.0)) {
                return Err(Error::Domain {
                    op: "log",
                    reason: format!("non-positive input {bad}"),
                });
            }
        }
        let y = x.map(|v| unary_forward(op, v));
        Ok(self.push(y, Op::Unary(op, a.id)))
    }

    /// Elementwise binary op. Shapes must match, or one side must hold a
    /// single element which is broadcast.
    pub fn binary<'g>(&'g self, op: BinaryOp, a: Var<'g>, b: Var<'g>) -> Result<Var<'g>> {
        let (x, y) = (a.value(), b.value());
        let out = if x.shape() == y.shape() {
            x.zip_map(&y, "elementwise", |p, q| binary_forward(op, p, q))?
        } else if y.numel() == 1 {
            let q = y.data()[0];
            x.map(|p| binary_forward(op, p, q))
        } else if x.numel() == 1 {
            let p = x.data()[0];
            y.map(|q| binary_forward(op, p, q))
        } else {
            return Err(Error::ShapeMismatch {
                op: "elementwise",
                left: x.shape().to_vec(),
                right: y.shape().to_vec(),
            });
        };
        Ok(self.push(out, Op::Binary(op, a.id, b.id)))
    }

    pub fn matmul<'g>(&'g self, a: Var<'g>, b: Var<'g>) -> Result<Var<'g>> {
        let out = a.value().matmul(&b.value())?;
        Ok(self.push(out, Op::MatMul(a.id, b.id)))
    }

    /// `x (m×n) + bias (n)` with the bias repeated on every row.
    pub fn add_bias<'g>(&'g self, x: Var<'g>, bias: Var<'g>) -> Result<Var<'g>> {
        let xv = x.value();
        let bv = bias.value();
        let (m, n) = require_matrix("add_bias", &xv)?;
        if bv.numel() != n {
            return Err(Error::ShapeMismatch {
                op: "add_bias",
                left: xv.shape().to_vec(),
                right: bv.shape().to_vec(),
            });
        }
        let mut out = xv.as_ref().clone();
        let b = bv.data();
        for i in 0..m {
            for (o, &bj) in out.data_mut()[i * n..(i + 1) * n].iter_mut().zip(b) {
                *o += bj;
            }
        }
        Ok(self.push(out, Op::AddBias(x.id, bias.id)))
    }

    pub fn reduce<'g>(&'g self, op: ReduceOp, a: Var<'g>, axis: Option<usize>) -> Result<Var<'g>> {
        let x = a.value();
        let out = match axis {
            None => Tensor::scalar(match op {
                ReduceOp::Sum => x.sum(),
                ReduceOp::Mean => x.mean(),
                ReduceOp::Max => x.max(),
            }),
            Some(ax) => {
                if ax >= x.rank() {
                    return Err(Error::InvalidAxis {
                        axis: ax,
                        rank: x.rank(),
                    });
                }
                let (outer, len, inner) = axis_split(x.shape(), ax);
                let mut data = vec![0.0; outer * inner];
                for o in 0..outer {
                    for i in 0..inner {
                        let vals = (0..len).map(|k| x.data()[(o * len + k) * inner + i]);
                        data[o * inner + i] = match op {
                            ReduceOp::Sum => vals.sum(),
                            ReduceOp::Mean => vals.sum::<f64>() / len as f64,
                            ReduceOp::Max => vals.fold(f64::NEG_INFINITY, f64::max),
                        };
                    }
                }
                Tensor::new(reduced_shape(x.shape(), ax), data)?
            }
        };
        Ok(self.push(out, Op::Reduce(op, a.id, axis)))
    }

    /// Columns `start..end` of a matrix.
    pub fn slice_cols<'g>(&'g self, a: Var<'g>, start: usize, end: usize) -> Result<Var<'g>> {
        let x = a.value();
        let (m, n) = require_matrix("slice_cols", &x)?;
        if start >= end || end > n {
            return Err(Error::invalid(format!(
                "column range {start}..{end} out of bounds for {n} columns"
            )));
        }
        let w = end - start;
        let mut data = Vec::with_capacity(m * w);
        for i in 0..m {
            data.extend_from_slice(&x.row(i)[start..end]);
        }
        Ok(self.push(Tensor::matrix(m, w, data)?, Op::SliceCols(a.id, start)))
    }

    pub fn concat_cols<'g>(&'g self, parts: &[Var<'g>]) -> Result<Var<'g>> {
        let values: Vec<Rc<Tensor>> = parts.iter().map(Var::value).collect();
        let first = values
            .first()
            .ok_or_else(|| Error::invalid("concat_cols of nothing"))?;
        let (m, _) = require_matrix("concat_cols", first)?;
        let mut total = 0;
        for v in &values {
            let (mi, ni) = require_matrix("concat_cols", v)?;
            if mi != m {
                return Err(Error::ShapeMismatch {
                    op: "concat_cols",
                    left: first.shape().to_vec(),
                    right: v.shape().to_vec(),
                });
            }
            total += ni;
        }
        let mut data = Vec::with_capacity(m * total);
        for i in 0..m {
            for v in &values {
                data.extend_from_slice(v.row(i));
            }
        }
        Ok(self.push(
            Tensor::matrix(m, total, data)?,
            Op::ConcatCols(parts.iter().map(|p| p.id).collect()),
        ))
    }

    /// Forward value is `forward_value` verbatim; backward routes the
    /// incoming gradient unchanged to `surrogate`.
    pub fn custom_gradient<'g>(&'g self, forward_value: Tensor, surrogate: Var<'g>) -> Result<Var<'g>> {
        let s = surrogate.value();
        if s.shape() != forward_value.shape() {
            return Err(Error::ShapeMismatch {
                op: "custom_gradient",
                left: forward_value.shape().to_vec(),
                right: s.shape().to_vec(),
            });
        }
        Ok(self.push(forward_value, Op::CustomGradient(surrogate.id)))
    }

    /// `mask ⊙ x`, except that coordinates where the mask is zero come out
    /// as `+0.0` regardless of the sign of `x`.
    pub fn gate<'g>(&'g self, mask: Var<'g>, x: Var<'g>) -> Result<Var<'g>> {
        let out = mask
            .value()
            .zip_map(&x.value(), "gate", |m, v| if m == 0.0 { 0.0 } else { m * v })?;
        Ok(self.push(out, Op::Gate(mask.id, x.id)))
    }

    fn scale_node<'g>(&'g self, a: Var<'g>, factor: f64) -> Var<'g> {
        let out = a.value().map(|v| v * factor);
        self.push(out, Op::Scale(a.id, factor))
    }

    fn offset_node<'g>(&'g self, a: Var<'g>, shift: f64) -> Var<'g> {
        let out = a.value().map(|v| v + shift);
        self.push(out, Op::Offset(a.id))
    }

    fn clamp_min_node<'g>(&'g self, a: Var<'g>, floor: f64) -> Var<'g> {
        let out = a.value().map(|v| v.max(floor));
        self.push(out, Op::ClampMin(a.id, floor))
    }

    /// Reverse sweep from a single-element `loss`. Every node on a path to
    /// the loss is visited exactly once, and its total gradient is kept.
    pub fn backward(&self, loss: Var<'_>) -> Result<Gradients> {
        if !std::ptr::eq(loss.graph, self) {
            return Err(Error::invalid("loss belongs to a different graph"));
        }
        let nodes = self.nodes.borrow();
        let seed_shape = nodes[loss.id].value.shape().to_vec();
        if nodes[loss.id].value.numel() != 1 {
            return Err(Error::invalid(format!(
                "backward needs a scalar loss, got shape {seed_shape:?}"
            )));
        }
        let mut pending: Vec<Option<Tensor>> = vec![None; nodes.len()];
        let mut done: Vec<Option<Tensor>> = vec![None; nodes.len()];
        pending[loss.id] = Some(Tensor::ones(&seed_shape));
        for id in (0..=loss.id).rev() {
            let Some(g) = pending[id].take() else { continue };
            if !nodes[id].tracked {
                continue;
            }
            propagate(&nodes, id, &g, &mut pending)?;
            done[id] = Some(g);
        }
        Ok(Gradients { grads: done })
    }
}

/// Push the output gradient `g` of node `id` onto its parents.
fn propagate(nodes: &[Node], id: usize, g: &Tensor, grads: &mut [Option<Tensor>]) -> Result<()> {
    let node = &nodes[id];
    let y = &node.value;
    match &node.op {
        Op::Leaf => {}
        Op::Unary(op, a) => {
            let x = &nodes[*a].value;
            let d: Vec<f64> = x
                .data()
                .iter()
                .zip(y.data())
                .zip(g.data())
                .map(|((&xi, &yi), &gi)| gi * unary_derivative(*op, xi, yi))
                .collect();
            accumulate(grads, *a, Tensor::new(x.shape().to_vec(), d)?)?;
        }
        Op::Binary(op, a, b) => {
            let (xa, xb) = (&nodes[*a].value, &nodes[*b].value);
            let n = y.numel();
            let av = |i: usize| if xa.numel() == 1 { xa.data()[0] } else { xa.data()[i] };
            let bv = |i: usize| if xb.numel() == 1 { xb.data()[0] } else { xb.data()[i] };
            let mut ga = vec![0.0; n];
            let mut gb = vec![0.0; n];
            for i in 0..n {
                let gi = g.data()[i];
                let (p, q) = (av(i), bv(i));
                let (da, db) = match op {
                    BinaryOp::Add => (1.0, 1.0),
                    BinaryOp::Sub => (1.0, -1.0),
                    BinaryOp::Mul => (q, p),
                    BinaryOp::Div => (1.0 / q, -p / (q * q)),
                };
                ga[i] = gi * da;
                gb[i] = gi * db;
            }
            accumulate(grads, *a, fold_broadcast(ga, xa, y.shape())?)?;
            accumulate(grads, *b, fold_broadcast(gb, xb, y.shape())?)?;
        }
        Op::Scale(a, factor) => {
            accumulate(grads, *a, g.map(|v| v * factor))?;
        }
        Op::Offset(a) => {
            accumulate(grads, *a, g.clone())?;
        }
        Op::ClampMin(a, floor) => {
            let x = &nodes[*a].value;
            let d = x.zip_map(g, "clamp_min", |xi, gi| if xi > *floor { gi } else { 0.0 })?;
            accumulate(grads, *a, d)?;
        }
        Op::MatMul(a, b) => {
            let (xa, xb) = (&nodes[*a].value, &nodes[*b].value);
            let (m, k) = (xa.shape()[0], xa.shape()[1]);
            let n = xb.shape()[1];
            // dA = G·Bᵀ, dB = Aᵀ·G
            if nodes[*a].tracked {
                let mut da = vec![0.0; m * k];
                matmul_nt_into(g.data(), xb.data(), &mut da, m, n, k);
                accumulate(grads, *a, Tensor::matrix(m, k, da)?)?;
            }
            if nodes[*b].tracked {
                let mut db = vec![0.0; k * n];
                matmul_tn_into(xa.data(), g.data(), &mut db, m, k, n);
                accumulate(grads, *b, Tensor::matrix(k, n, db)?)?;
            }
        }
        Op::AddBias(x, bias) => {
            let bshape = nodes[*bias].value.shape().to_vec();
            let (m, n) = (g.shape()[0], g.shape()[1]);
            let mut db = vec![0.0; n];
            for i in 0..m {
                for (d, gi) in db.iter_mut().zip(g.row(i)) {
                    *d += gi;
                }
            }
            accumulate(grads, *bias, Tensor::new(bshape, db)?)?;
            accumulate(grads, *x, g.clone())?;
        }
        Op::Reduce(op, a, axis) => {
            let x = &nodes[*a].value;
            accumulate(grads, *a, reduce_backward(*op, x, g, *axis)?)?;
        }
        Op::SliceCols(a, start) => {
            let x = &nodes[*a].value;
            let (m, n) = (x.shape()[0], x.shape()[1]);
            let w = g.shape()[1];
            let mut d = vec![0.0; m * n];
            for i in 0..m {
                d[i * n + start..i * n + start + w].copy_from_slice(g.row(i));
            }
            accumulate(grads, *a, Tensor::matrix(m, n, d)?)?;
        }
        Op::ConcatCols(parts) => {
            let m = g.shape()[0];
            let mut offset = 0;
            for &p in parts {
                let w = nodes[p].value.shape()[1];
                let mut d = Vec::with_capacity(m * w);
                for i in 0..m {
                    d.extend_from_slice(&g.row(i)[offset..offset + w]);
                }
                accumulate(grads, p, Tensor::matrix(m, w, d)?)?;
                offset += w;
            }
        }
        Op::CustomGradient(s) => {
            accumulate(grads, *s, g.clone())?;
        }
        Op::Gate(mask, x) => {
            let (mv, xv) = (&nodes[*mask].value, &nodes[*x].value);
            accumulate(grads, *mask, xv.zip_map(g, "gate", |xi, gi| xi * gi)?)?;
            accumulate(grads, *x, mv.zip_map(g, "gate", |mi, gi| mi * gi)?)?;
        }
    }
    Ok(())
}

fn accumulate(grads: &mut [Option<Tensor>], id: usize, g: Tensor) -> Result<()> {
    match &mut grads[id] {
        Some(existing) => {
            if existing.shape() != g.shape() {
                return Err(Error::ShapeMismatch {
                    op: "backward",
                    left: existing.shape().to_vec(),
                    right: g.shape().to_vec(),
                });
            }
            for (e, v) in existing.data_mut().iter_mut().zip(g.data()) {
                *e += v;
            }
        }
        slot @ None => *slot = Some(g),
    }
    Ok(())
}

/// Sum a full-size gradient down to a broadcast operand's shape.
fn fold_broadcast(full: Vec<f64>, operand: &Tensor, out_shape: &[usize]) -> Result<Tensor> {
    if operand.shape() == out_shape {
        Tensor::new(out_shape.to_vec(), full)
    } else {
        Tensor::new(operand.shape().to_vec(), vec![full.iter().sum()])
    }
}

fn reduce_backward(op: ReduceOp, x: &Tensor, g: &Tensor, axis: Option<usize>) -> Result<Tensor> {
    let n = x.numel();
    match axis {
        None => {
            let gv = g.data()[0];
            let data = match op {
                ReduceOp::Sum => vec![gv; n],
                ReduceOp::Mean => vec![gv / n as f64; n],
                ReduceOp::Max => {
                    let mut d = vec![0.0; n];
                    if let Some(i) = argmax(x.data().iter().copied()) {
                        d[i] = gv;
                    }
                    d
                }
            };
            Tensor::new(x.shape().to_vec(), data)
        }
        Some(ax) => {
            let (outer, len, inner) = axis_split(x.shape(), ax);
            let mut data = vec![0.0; n];
            for o in 0..outer {
                for i in 0..inner {
                    let gv = g.data()[o * inner + i];
                    let idx = |k: usize| (o * len + k) * inner + i;
                    match op {
                        ReduceOp::Sum => (0..len).for_each(|k| data[idx(k)] = gv),
                        ReduceOp::Mean => (0..len).for_each(|k| data[idx(k)] = gv / len as f64),
                        ReduceOp::Max => {
                            if let Some(k) = argmax((0..len).map(|k| x.data()[idx(k)])) {
                                data[idx(k)] = gv;
                            }
                        }
                    }
                }
            }
            Tensor::new(x.shape().to_vec(), data)
        }
    }
}

fn argmax(values: impl Iterator<Item = f64>) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, v) in values.enumerate() {
        if best.is_none_or(|(_, b)| v > b) {
            best = Some((i, v));
        }
    }
    best.map(|(i, _)| i)
}

/// Per-node gradients of a scalar loss.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient at `var`, or `None` if the loss does not depend on it.
    pub fn get(&self, var: Var<'_>) -> Option<&Tensor> {
        self.grads.get(var.id).and_then(Option::as_ref)
    }

    /// Gradient at `var`, zeros if the loss does not depend on it.
    pub fn wrt(&self, var: Var<'_>) -> Tensor {
        self.get(var)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(var.value().shape()))
    }
}

impl<'g> Var<'g> {
    pub fn graph(&self) -> &'g Graph {
        self.graph
    }

    pub fn value(&self) -> Rc<Tensor> {
        self.graph.value_of(self.id)
    }

    pub fn shape(&self) -> Vec<usize> {
        self.value().shape().to_vec()
    }

    /// Value of a single-element node.
    pub fn item(&self) -> f64 {
        let v = self.value();
        debug_assert_eq!(v.numel(), 1);
        v.data()[0]
    }

    fn un(self, op: UnaryOp) -> Var<'g> {
        self.graph
            .unary(op, self)
            .expect("non-log unary ops cannot fail")
    }

    pub fn exp(self) -> Var<'g> {
        self.un(UnaryOp::Exp)
    }

    pub fn ln(self) -> Result<Var<'g>> {
        self.graph.unary(UnaryOp::Log, self)
    }

    pub fn sigmoid(self) -> Var<'g> {
        self.un(UnaryOp::Sigmoid)
    }

    pub fn silu(self) -> Var<'g> {
        self.un(UnaryOp::Silu)
    }

    pub fn relu(self) -> Var<'g> {
        self.un(UnaryOp::Relu)
    }

    pub fn softplus(self) -> Var<'g> {
        self.un(UnaryOp::Softplus)
    }

    pub fn square(self) -> Var<'g> {
        self.un(UnaryOp::Square)
    }

    pub fn neg(self) -> Var<'g> {
        self.un(UnaryOp::Neg)
    }

    pub fn scale(self, factor: f64) -> Var<'g> {
        self.graph.scale_node(self, factor)
    }

    pub fn add_scalar(self, shift: f64) -> Var<'g> {
        self.graph.offset_node(self, shift)
    }

    pub fn clamp_min(self, floor: f64) -> Var<'g> {
        self.graph.clamp_min_node(self, floor)
    }

    pub fn add(self, other: Var<'g>) -> Result<Var<'g>> {
        self.graph.binary(BinaryOp::Add, self, other)
    }

    pub fn sub(self, other: Var<'g>) -> Result<Var<'g>> {
        self.graph.binary(BinaryOp::Sub, self, other)
    }

    pub fn mul(self, other: Var<'g>) -> Result<Var<'g>> {
        self.graph.binary(BinaryOp::Mul, self, other)
    }

    pub fn div(self, other: Var<'g>) -> Result<Var<'g>> {
        self.graph.binary(BinaryOp::Div, self, other)
    }

    pub fn matmul(self, other: Var<'g>) -> Result<Var<'g>> {
        self.graph.matmul(self, other)
    }

    pub fn add_bias(self, bias: Var<'g>) -> Result<Var<'g>> {
        self.graph.add_bias(self, bias)
    }

    pub fn sum(self) -> Var<'g> {
        self.graph
            .reduce(ReduceOp::Sum, self, None)
            .expect("full reduction cannot fail")
    }

    pub fn mean(self) -> Var<'g> {
        self.graph
            .reduce(ReduceOp::Mean, self, None)
            .expect("full reduction cannot fail")
    }

    pub fn sum_axis(self, axis: usize) -> Result<Var<'g>> {
        self.graph.reduce(ReduceOp::Sum, self, Some(axis))
    }

    pub fn slice_cols(self, start: usize, end: usize) -> Result<Var<'g>> {
        self.graph.slice_cols(self, start, end)
    }
}

/// Compare the reverse-mode gradient of `f` at `x` against central
/// differences. Returns the largest `|analytic − numeric| / max(1, |analytic|)`
/// over all coordinates.
///
/// Paths through [`Graph::custom_gradient`] are not differentiable in the
/// ordinary sense and must not be checked this way.
pub fn grad_check<F>(f: F, x: &Tensor, eps: f64) -> Result<f64>
where
    F: for<'g> Fn(&'g Graph, Var<'g>) -> Result<Var<'g>>,
{
    if !(1e-7..=1e-3).contains(&eps) {
        return Err(Error::invalid(format!("grad_check eps {eps} outside [1e-7, 1e-3]")));
    }
    let analytic = {
        let g = Graph::new();
        let xv = g.leaf(x.clone());
        let loss = f(&g, xv)?;
        g.backward(loss)?.wrt(xv)
    };
    let eval = |t: Tensor| -> Result<f64> {
        let g = Graph::new();
        let xv = g.leaf(t);
        let v = f(&g, xv)?.value().item()?;
        if !v.is_finite() {
            return Err(Error::NonFinite("grad_check function value".into()));
        }
        Ok(v)
    };
    let mut worst: f64 = 0.0;
    for i in 0..x.numel() {
        let mut plus = x.clone();
        plus.data_mut()[i] += eps;
        let mut minus = x.clone();
        minus.data_mut()[i] -= eps;
        let numeric = (eval(plus)? - eval(minus)?) / (2.0 * eps);
        let a = analytic.data()[i];
        worst = worst.max((a - numeric).abs() / a.abs().max(1.0));
    }
    Ok(worst)
}

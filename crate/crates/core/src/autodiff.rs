//! Tape-based reverse-mode differentiation over [`Matrix`] values.
//!
//! Every operation appends a record to the [`Tape`]; records are stored in
//! creation order, which is a topological order of the graph, so
//! [`Tape::backward`] is a single reverse sweep. Leaves are either
//! parameters (gradients wanted) or constants (gradients never propagated
//! into them, nor into anything computed only from constants).
//!
//! ```
//! use cincgan::autodiff::Tape;
//! use cincgan::Matrix;
//!
//! let mut tape = Tape::new();
//! let w = tape.param(Matrix::filled(1, 2, 3.0));
//! let loss = tape.mean_square(w, 1.0).unwrap();
//! tape.backward(loss).unwrap();
//! assert_eq!(tape.scalar(loss), 4.0);
//! assert_eq!(tape.grad(w).as_slice(), &[2.0, 2.0]);
//! ```

use std::borrow::Cow;

use crate::error::{Error, Result};
use crate::matrix::{gemm, Matrix};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Value {
    id: usize,
    rows: usize,
    cols: usize,
}

impl Value {
    pub fn id(&self) -> usize {
        self.id
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }
}

#[derive(Debug, Clone, Copy)]
enum Op {
    Leaf,
    MatMul(usize, usize),
    Affine(usize, usize, usize),
    AddBias(usize, usize),
    Relu(usize),
    Sigmoid(usize),
    MeanSquare(usize, f64),
    MeanAbsDiff(usize, usize),
    Add(usize, usize),
    Scale(usize, f64),
    Sum(usize),
}

#[derive(Debug)]
struct Node {
    data: Matrix,
    /// Allocated on first accumulation.
    grad: Option<Matrix>,
    requires_grad: bool,
    touched: bool,
    op: Op,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    consumed: bool,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    /// Drops every record so the tape can be used for a fresh pass.
    pub fn reset(&mut self) {
        self.nodes.clear();
        self.consumed = false;
    }

    /// Drops every record from `len` on and clears the remaining
    /// gradients, so the records before `len` can be reused for another
    /// pass. Values handed out for dropped records become invalid.
    pub fn truncate(&mut self, len: usize) {
        self.nodes.truncate(len);
        for n in &mut self.nodes {
            n.grad = None;
            n.touched = false;
        }
        self.consumed = false;
    }

    /// Mutable access to a leaf's value; computed records cannot be edited.
    pub fn leaf_mut(&mut self, v: Value) -> Result<&mut Matrix> {
        let n = &mut self.nodes[v.id];
        match n.op {
            Op::Leaf => Ok(&mut n.data),
            _ => Err(Error::Incompatible(format!("record {} is not a leaf", v.id))),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn is_consumed(&self) -> bool {
        self.consumed
    }

    fn push(&mut self, data: Matrix, requires_grad: bool, op: Op) -> Value {
        let (rows, cols) = data.shape();
        let id = self.nodes.len();
        self.nodes.push(Node {
            grad: None,
            data,
            requires_grad,
            touched: false,
            op,
        });
        Value { id, rows, cols }
    }

    fn needs(&self, v: Value) -> bool {
        self.nodes[v.id].requires_grad
    }

    /// Leaf whose gradient is accumulated by `backward`.
    pub fn param(&mut self, data: Matrix) -> Value {
        self.push(data, true, Op::Leaf)
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, data: Matrix) -> Value {
        self.push(data, false, Op::Leaf)
    }

    pub fn value(&self, v: Value) -> &Matrix {
        &self.nodes[v.id].data
    }

    /// Accumulated gradient; zeros for nodes `backward` never reached.
    pub fn grad(&self, v: Value) -> Cow<'_, Matrix> {
        match &self.nodes[v.id].grad {
            Some(g) => Cow::Borrowed(g),
            None => Cow::Owned(Matrix::zeros(v.rows, v.cols)),
        }
    }

    /// The single entry of a 1x1 value.
    /// Which side of every non-differentiable point the recorded values
    /// sit on: one entry per ReLU input and per L1 difference, `-1`, `0` or
    /// `1`. Two passes with equal patterns run through the same linear
    /// pieces, so a finite difference between them is meaningful.
    pub fn kink_pattern(&self) -> Vec<i8> {
        let mut out = Vec::new();
        for n in &self.nodes {
            match n.op {
                Op::Relu(a) => out.extend(self.nodes[a].data.as_slice().iter().map(|v| sign(*v) as i8)),
                Op::MeanAbsDiff(a, b) => out.extend(
                    self.nodes[a]
                        .data
                        .as_slice()
                        .iter()
                        .zip(self.nodes[b].data.as_slice())
                        .map(|(x, y)| sign(x - y) as i8),
                ),
                _ => {}
            }
        }
        out
    }

    pub fn scalar(&self, v: Value) -> f64 {
        let m = self.value(v);
        debug_assert_eq!(m.shape(), (1, 1));
        m.as_slice()[0]
    }

    pub fn matmul(&mut self, a: Value, b: Value) -> Result<Value> {
        if a.cols != b.rows {
            return Err(Error::Shape {
                op: "matmul",
                left: a.shape(),
                right: b.shape(),
            });
        }
        let mut out = Matrix::zeros(a.rows, b.cols);
        gemm(
            1.0,
            &self.nodes[a.id].data,
            false,
            &self.nodes[b.id].data,
            false,
            0.0,
            &mut out,
        );
        let rg = self.needs(a) || self.needs(b);
        Ok(self.push(out, rg, Op::MatMul(a.id, b.id)))
    }

    /// `x · w + bias`, the bias row added to every row. Same result as
    /// [`Tape::matmul`] followed by [`Tape::add_bias`], in one record.
    pub fn affine(&mut self, x: Value, w: Value, bias: Value) -> Result<Value> {
        if x.cols != w.rows {
            return Err(Error::Shape {
                op: "affine",
                left: x.shape(),
                right: w.shape(),
            });
        }
        if bias.rows != 1 || bias.cols != w.cols {
            return Err(Error::Shape {
                op: "affine",
                left: w.shape(),
                right: bias.shape(),
            });
        }
        let b = self.nodes[bias.id].data.as_slice();
        let mut out = Matrix::zeros(x.rows, w.cols);
        for r in 0..x.rows {
            out.row_mut(r).copy_from_slice(b);
        }
        gemm(
            1.0,
            &self.nodes[x.id].data,
            false,
            &self.nodes[w.id].data,
            false,
            1.0,
            &mut out,
        );
        let rg = self.needs(x) || self.needs(w) || self.needs(bias);
        Ok(self.push(out, rg, Op::Affine(x.id, w.id, bias.id)))
    }

    /// Adds a `1 x n` bias row to every row of `a`.
    pub fn add_bias(&mut self, a: Value, bias: Value) -> Result<Value> {
        if bias.rows != 1 || bias.cols != a.cols {
            return Err(Error::Shape {
                op: "add_bias",
                left: a.shape(),
                right: bias.shape(),
            });
        }
        let mut out = self.nodes[a.id].data.clone();
        let b = self.nodes[bias.id].data.as_slice();
        for r in 0..a.rows {
            for (o, bv) in out.row_mut(r).iter_mut().zip(b) {
                *o += bv;
            }
        }
        let rg = self.needs(a) || self.needs(bias);
        Ok(self.push(out, rg, Op::AddBias(a.id, bias.id)))
    }

    pub fn relu(&mut self, a: Value) -> Value {
        let out = self.nodes[a.id].data.map(relu);
        let rg = self.needs(a);
        self.push(out, rg, Op::Relu(a.id))
    }

    pub fn sigmoid(&mut self, a: Value) -> Value {
        let out = self.nodes[a.id].data.map(sigmoid);
        let rg = self.needs(a);
        self.push(out, rg, Op::Sigmoid(a.id))
    }

    /// Mean over all elements of `(a - target)^2`, as a 1x1 value.
    pub fn mean_square(&mut self, a: Value, target: f64) -> Result<Value> {
        let data = &self.nodes[a.id].data;
        if data.is_empty() {
            return Err(Error::Domain {
                op: "mean_square",
                msg: "empty input".into(),
            });
        }
        let n = data.len() as f64;
        let s: f64 = data.as_slice().iter().map(|v| (v - target) * (v - target)).sum();
        let rg = self.needs(a);
        Ok(self.push(Matrix::filled(1, 1, s / n), rg, Op::MeanSquare(a.id, target)))
    }

    /// Mean over all elements of `|a - b|`, as a 1x1 value.
    pub fn mean_abs_diff(&mut self, a: Value, b: Value) -> Result<Value> {
        if a.shape() != b.shape() {
            return Err(Error::Shape {
                op: "mean_abs_diff",
                left: a.shape(),
                right: b.shape(),
            });
        }
        let (da, db) = (&self.nodes[a.id].data, &self.nodes[b.id].data);
        if da.is_empty() {
            return Err(Error::Domain {
                op: "mean_abs_diff",
                msg: "empty input".into(),
            });
        }
        let n = da.len() as f64;
        let s: f64 = da
            .as_slice()
            .iter()
            .zip(db.as_slice())
            .map(|(x, y)| (x - y).abs())
            .sum();
        let rg = self.needs(a) || self.needs(b);
        Ok(self.push(Matrix::filled(1, 1, s / n), rg, Op::MeanAbsDiff(a.id, b.id)))
    }

    pub fn add(&mut self, a: Value, b: Value) -> Result<Value> {
        if a.shape() != b.shape() {
            return Err(Error::Shape {
                op: "add",
                left: a.shape(),
                right: b.shape(),
            });
        }
        let mut out = self.nodes[a.id].data.clone();
        for (o, v) in out
            .as_mut_slice()
            .iter_mut()
            .zip(self.nodes[b.id].data.as_slice())
        {
            *o += v;
        }
        let rg = self.needs(a) || self.needs(b);
        Ok(self.push(out, rg, Op::Add(a.id, b.id)))
    }

    pub fn scale(&mut self, a: Value, k: f64) -> Value {
        let out = self.nodes[a.id].data.map(|v| v * k);
        let rg = self.needs(a);
        self.push(out, rg, Op::Scale(a.id, k))
    }

    /// Sum of all elements, as a 1x1 value.
    pub fn sum(&mut self, a: Value) -> Value {
        let s: f64 = self.nodes[a.id].data.as_slice().iter().sum();
        let rg = self.needs(a);
        self.push(Matrix::filled(1, 1, s), rg, Op::Sum(a.id))
    }

    /// `Σ k_i · v_i` over 1x1 values.
    pub fn weighted_sum(&mut self, terms: &[(f64, Value)]) -> Result<Value> {
        let mut acc: Option<Value> = None;
        for &(k, v) in terms {
            let scaled = if k == 1.0 { v } else { self.scale(v, k) };
            acc = Some(match acc {
                None => scaled,
                Some(a) => self.add(a, scaled)?,
            });
        }
        acc.ok_or_else(|| Error::Empty("weighted_sum of no terms".into()))
    }

    /// Accumulates d(loss)/d(node) into the gradient of every node that
    /// depends on a parameter. The tape is consumed afterwards.
    pub fn backward(&mut self, loss: Value) -> Result<()> {
        if self.consumed {
            return Err(Error::TapeConsumed);
        }
        if loss.shape() != (1, 1) {
            return Err(Error::NonScalarLoss {
                rows: loss.rows,
                cols: loss.cols,
            });
        }
        self.consumed = true;
        if !self.nodes[loss.id].requires_grad {
            return Ok(());
        }
        self.nodes[loss.id].grad = Some(Matrix::filled(1, 1, 1.0));
        self.nodes[loss.id].touched = true;

        for i in (0..=loss.id).rev() {
            let (before, rest) = self.nodes.split_at_mut(i);
            let node = &rest[0];
            if !node.requires_grad || !node.touched {
                continue;
            }
            propagate(node, before);
        }
        Ok(())
    }
}

fn relu(v: f64) -> f64 {
    // NaN falls through unchanged so bad inputs stay visible.
    if v <= 0.0 {
        0.0
    } else {
        v
    }
}

/// Logistic function, evaluated without overflow for large `|v|`.
pub fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

fn target(before: &mut [Node], id: usize) -> Option<&mut Node> {
    let n = &mut before[id];
    if n.requires_grad {
        n.touched = true;
        Some(n)
    } else {
        None
    }
}

impl Node {
    fn grad_mut(&mut self) -> &mut Matrix {
        let (r, c) = self.data.shape();
        self.grad.get_or_insert_with(|| Matrix::zeros(r, c))
    }

    fn data_and_grad(&mut self) -> (&Matrix, &mut Matrix) {
        let (r, c) = self.data.shape();
        (&self.data, self.grad.get_or_insert_with(|| Matrix::zeros(r, c)))
    }
}

fn propagate(node: &Node, before: &mut [Node]) {
    let Some(g) = &node.grad else { return };
    match node.op {
        Op::Leaf => {}
        Op::MatMul(a, b) => {
            // dA += dC · Bᵀ, dB += Aᵀ · dC
            if a == b {
                let n = &mut before[a];
                if n.requires_grad {
                    n.touched = true;
                    let mut tmp = Matrix::zeros(n.data.rows(), n.data.cols());
                    gemm(1.0, g, false, &n.data, true, 0.0, &mut tmp);
                    gemm(1.0, &n.data, true, g, false, 1.0, &mut tmp);
                    add_into(n.grad_mut(), &tmp);
                }
                return;
            }
            if before[a].requires_grad {
                let (lo, hi) = before.split_at_mut(a.max(b));
                let (an, bn) = if a < b {
                    (&mut lo[a], &hi[0])
                } else {
                    (&mut hi[0], &lo[b])
                };
                an.touched = true;
                gemm(1.0, g, false, &bn.data, true, 1.0, an.grad_mut());
            }
            if before[b].requires_grad {
                let (lo, hi) = before.split_at_mut(a.max(b));
                let (an, bn) = if a < b {
                    (&lo[a], &mut hi[0])
                } else {
                    (&hi[0], &mut lo[b])
                };
                bn.touched = true;
                gemm(1.0, &an.data, true, g, false, 1.0, bn.grad_mut());
            }
        }
        Op::Affine(x, w, bias) => {
            debug_assert!(x != w && w != bias && x != bias);
            if before[x].requires_grad {
                let (lo, hi) = before.split_at_mut(x.max(w));
                let (xn, wn) = if x < w {
                    (&mut lo[x], &hi[0])
                } else {
                    (&mut hi[0], &lo[w])
                };
                xn.touched = true;
                gemm(1.0, g, false, &wn.data, true, 1.0, xn.grad_mut());
            }
            if before[w].requires_grad {
                let (lo, hi) = before.split_at_mut(x.max(w));
                let (xn, wn) = if x < w {
                    (&lo[x], &mut hi[0])
                } else {
                    (&hi[0], &mut lo[w])
                };
                wn.touched = true;
                gemm(1.0, &xn.data, true, g, false, 1.0, wn.grad_mut());
            }
            if let Some(bn) = target(before, bias) {
                add_column_sums(bn.grad_mut(), g);
            }
        }
        Op::AddBias(a, bias) => {
            if let Some(an) = target(before, a) {
                add_into(an.grad_mut(), g);
            }
            if let Some(bn) = target(before, bias) {
                add_column_sums(bn.grad_mut(), g);
            }
        }
        Op::Relu(a) => {
            if let Some(an) = target(before, a) {
                let (data, grad) = an.data_and_grad();
                for ((o, x), gv) in grad
                    .as_mut_slice()
                    .iter_mut()
                    .zip(data.as_slice())
                    .zip(g.as_slice())
                {
                    if *x > 0.0 {
                        *o += gv;
                    }
                }
            }
        }
        Op::Sigmoid(a) => {
            if let Some(an) = target(before, a) {
                for ((o, s), gv) in an
                    .grad_mut()
                    .as_mut_slice()
                    .iter_mut()
                    .zip(node.data.as_slice())
                    .zip(g.as_slice())
                {
                    *o += gv * s * (1.0 - s);
                }
            }
        }
        Op::MeanSquare(a, t) => {
            if let Some(an) = target(before, a) {
                let scale = 2.0 * g.as_slice()[0] / an.data.len() as f64;
                let (data, grad) = an.data_and_grad();
                for (o, x) in grad.as_mut_slice().iter_mut().zip(data.as_slice()) {
                    *o += scale * (x - t);
                }
            }
        }
        Op::MeanAbsDiff(a, b) => {
            let scale = g.as_slice()[0] / node_len(before, a) as f64;
            let signs: Vec<f64> = before[a]
                .data
                .as_slice()
                .iter()
                .zip(before[b].data.as_slice())
                .map(|(x, y)| sign(x - y) * scale)
                .collect();
            if let Some(an) = target(before, a) {
                for (o, s) in an.grad_mut().as_mut_slice().iter_mut().zip(&signs) {
                    *o += s;
                }
            }
            if let Some(bn) = target(before, b) {
                for (o, s) in bn.grad_mut().as_mut_slice().iter_mut().zip(&signs) {
                    *o -= s;
                }
            }
        }
        Op::Add(a, b) => {
            if let Some(an) = target(before, a) {
                add_into(an.grad_mut(), g);
            }
            if let Some(bn) = target(before, b) {
                add_into(bn.grad_mut(), g);
            }
        }
        Op::Scale(a, k) => {
            if let Some(an) = target(before, a) {
                for (o, v) in an.grad_mut().as_mut_slice().iter_mut().zip(g.as_slice()) {
                    *o += k * v;
                }
            }
        }
        Op::Sum(a) => {
            if let Some(an) = target(before, a) {
                let gv = g.as_slice()[0];
                for o in an.grad_mut().as_mut_slice() {
                    *o += gv;
                }
            }
        }
    }
}

fn add_column_sums(out: &mut Matrix, g: &Matrix) {
    let out = out.as_mut_slice();
    for r in 0..g.rows() {
        for (o, v) in out.iter_mut().zip(g.row(r)) {
            *o += v;
        }
    }
}

fn node_len(nodes: &[Node], id: usize) -> usize {
    nodes[id].data.len()
}

/// Sign with the subgradient at zero fixed to 0.
fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn add_into(dst: &mut Matrix, src: &Matrix) {
    for (o, v) in dst.as_mut_slice().iter_mut().zip(src.as_slice()) {
        *o += v;
    }
}

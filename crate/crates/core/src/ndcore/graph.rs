//! Define-by-run reverse-mode automatic differentiation.
//!
//! A [`Graph`] is a tape: every builder appends one node whose parents already
//! exist, so node order is a topological order and [`Graph::backward`] is a
//! single reverse sweep. Graphs are rebuilt for every optimization step.

use crate::error::{Error, Result};
use crate::ndcore::matrix::{gemm, Matrix};

/// Handle to a node in a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Coarse classification of graph nodes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OpKind {
    Leaf,
    Affine,
    Activation,
    Elementwise,
    Reduce,
    Concat,
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Affine { x: Var, w: Var, b: Var },
    Tanh(Var),
    Relu(Var),
    Exp(Var),
    Ln(Var),
    Softplus(Var),
    Abs(Var),
    Square(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Min(Var, Var),
    Max(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Clamp(Var, f64, f64),
    MulConst(Var, Matrix),
    Sum(Var),
    Mean(Var),
    RowSum(Var),
    GroupSum(Var, usize),
    ConcatCols(Var, Var),
    Gather(Var, Vec<usize>),
}

impl Op {
    fn kind(&self) -> OpKind {
        match self {
            Op::Leaf => OpKind::Leaf,
            Op::Affine { .. } => OpKind::Affine,
            Op::Tanh(_) | Op::Relu(_) | Op::Exp(_) | Op::Ln(_) | Op::Softplus(_) | Op::Abs(_) | Op::Square(_) => {
                OpKind::Activation
            }
            Op::Add(..)
            | Op::Sub(..)
            | Op::Mul(..)
            | Op::Min(..)
            | Op::Max(..)
            | Op::Scale(..)
            | Op::AddScalar(..)
            | Op::Clamp(..)
            | Op::MulConst(..) => OpKind::Elementwise,
            Op::Sum(_) | Op::Mean(_) | Op::RowSum(_) | Op::GroupSum(..) => OpKind::Reduce,
            Op::ConcatCols(..) | Op::Gather(..) => OpKind::Concat,
        }
    }
}

#[derive(Clone, Debug)]
struct Node {
    value: Matrix,
    op: Op,
    requires_grad: bool,
}

/// Computation tape. See the module docs.
#[derive(Clone, Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    grads: Vec<Option<Matrix>>,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Numerically stable `ln(1 + e^x)`.
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
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

    fn push(&mut self, value: Matrix, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn node(&self, v: Var) -> &Node {
        &self.nodes[v.0]
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Trainable leaf.
    pub fn param(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Leaf that never receives gradient.
    pub fn constant(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// Stop-gradient: a constant copy of `v`'s current value.
    pub fn detach(&mut self, v: Var) -> Var {
        let value = self.node(v).value.clone();
        self.constant(value)
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.node(v).value
    }

    pub fn kind(&self, v: Var) -> OpKind {
        self.node(v).op.kind()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.rg(v)
    }

    /// Scalar value of a 1x1 node.
    pub fn scalar(&self, v: Var) -> Result<f64> {
        self.value(v).item()
    }

    fn check_same(&self, a: Var, b: Var, op: &'static str) -> Result<()> {
        self.value(a).ensure_same_shape(self.value(b), op)
    }

    /// `x · wᵀ + b` with `x: n×in`, `w: out×in`, `b: 1×out`.
    pub fn affine(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (xv, wv, bv) = (self.value(x), self.value(w), self.value(b));
        if xv.cols() != wv.cols() {
            return Err(Error::Dimension {
                op: "affine",
                left: xv.shape(),
                right: wv.shape(),
            });
        }
        if bv.shape() != (1, wv.rows()) {
            return Err(Error::Dimension {
                op: "affine(bias)",
                left: wv.shape(),
                right: bv.shape(),
            });
        }
        let mut out = Matrix::zeros(xv.rows(), wv.rows());
        gemm(xv, false, wv, true, &mut out, 1.0, 0.0);
        out.add_row_broadcast(bv)?;
        let rg = self.rg(x) || self.rg(w) || self.rg(b);
        Ok(self.push(out, Op::Affine { x, w, b }, rg))
    }

    fn unary(&mut self, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let out = self.value(a).map(f);
        let rg = self.rg(a);
        self.push(out, op, rg)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(a, f64::tanh, Op::Tanh(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(a, |v| v.max(0.0), Op::Relu(a))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(a, f64::exp, Op::Exp(a))
    }

    /// Natural log; fails on non-positive input.
    pub fn ln(&mut self, a: Var) -> Result<Var> {
        if self.value(a).data().iter().any(|&v| v <= 0.0) {
            return Err(Error::numeric("ln of non-positive value"));
        }
        Ok(self.unary(a, f64::ln, Op::Ln(a)))
    }

    pub fn softplus(&mut self, a: Var) -> Var {
        self.unary(a, softplus, Op::Softplus(a))
    }

    pub fn abs(&mut self, a: Var) -> Var {
        self.unary(a, f64::abs, Op::Abs(a))
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.unary(a, |v| v * v, Op::Square(a))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        self.unary(a, |v| v * c, Op::Scale(a, c))
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.scale(a, -1.0)
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Var {
        self.unary(a, |v| v + c, Op::AddScalar(a))
    }

    /// Elementwise clamp; gradient passes only strictly inside `(lo, hi)`.
    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        self.unary(a, |v| v.clamp(lo, hi), Op::Clamp(a, lo, hi))
    }

    fn binary(&mut self, a: Var, b: Var, name: &'static str, f: impl Fn(f64, f64) -> f64, op: Op) -> Result<Var> {
        self.check_same(a, b, name)?;
        let out = self.value(a).zip_map(self.value(b), f)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, op, rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "add", |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "sub", |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "mul", |x, y| x * y, Op::Mul(a, b))
    }

    pub fn min(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "min", |x, y| if x <= y { x } else { y }, Op::Min(a, b))
    }

    pub fn max(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "max", |x, y| if x >= y { x } else { y }, Op::Max(a, b))
    }

    /// Elementwise product with a constant matrix (e.g. a dropout mask).
    pub fn mul_const(&mut self, a: Var, c: Matrix) -> Result<Var> {
        let out = self.value(a).zip_map(&c, |x, y| x * y).map_err(|_| Error::Dimension {
            op: "mul_const",
            left: self.value(a).shape(),
            right: c.shape(),
        })?;
        let rg = self.rg(a);
        Ok(self.push(out, Op::MulConst(a, c), rg))
    }

    /// Sum of all entries (1x1).
    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).sum();
        let rg = self.rg(a);
        self.push(Matrix::scalar(s), Op::Sum(a), rg)
    }

    /// Mean of all entries (1x1).
    pub fn mean(&mut self, a: Var) -> Result<Var> {
        if self.value(a).is_empty() {
            return Err(Error::contract("mean of empty matrix"));
        }
        let m = self.value(a).mean();
        let rg = self.rg(a);
        Ok(self.push(Matrix::scalar(m), Op::Mean(a), rg))
    }

    /// Per-row sum: `r×c → r×1`.
    pub fn row_sum(&mut self, a: Var) -> Var {
        let av = self.value(a);
        let data = (0..av.rows()).map(|r| av.row(r).iter().sum()).collect();
        let out = Matrix::from_vec(av.rows(), 1, data).expect("row_sum shape");
        let rg = self.rg(a);
        self.push(out, Op::RowSum(a), rg)
    }

    /// Sums consecutive blocks of `group` rows: `(n·group)×c → n×c`.
    pub fn group_sum(&mut self, a: Var, group: usize) -> Result<Var> {
        let av = self.value(a);
        if group == 0 || av.rows() % group != 0 {
            return Err(Error::contract(format!(
                "group_sum: {} rows not divisible into groups of {group}",
                av.rows()
            )));
        }
        let n = av.rows() / group;
        let mut out = Matrix::zeros(n, av.cols());
        for r in 0..av.rows() {
            let src = av.row(r);
            for (o, v) in out.row_mut(r / group).iter_mut().zip(src) {
                *o += v;
            }
        }
        let rg = self.rg(a);
        Ok(self.push(out, Op::GroupSum(a, group), rg))
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).hconcat(self.value(b))?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::ConcatCols(a, b), rg))
    }

    /// Row gather; repeated indices are allowed and their gradients accumulate.
    pub fn gather_rows(&mut self, a: Var, indices: Vec<usize>) -> Result<Var> {
        let out = self.value(a).gather_rows(&indices)?;
        let rg = self.rg(a);
        Ok(self.push(out, Op::Gather(a, indices), rg))
    }

    /// Gradient of the last backward root w.r.t. `v`. Nodes that the root does
    /// not depend on through differentiable paths report exact zeros.
    pub fn grad(&self, v: Var) -> Matrix {
        match self.grads.get(v.0).and_then(|g| g.as_ref()) {
            Some(g) => g.clone(),
            None => {
                let (r, c) = self.value(v).shape();
                Matrix::zeros(r, c)
            }
        }
    }

    fn accumulate(grads: &mut [Option<Matrix>], target: Var, delta: Matrix) {
        match &mut grads[target.0] {
            Some(g) => {
                for (a, b) in g.data_mut().iter_mut().zip(delta.data()) {
                    *a += b;
                }
            }
            slot @ None => *slot = Some(delta),
        }
    }

    /// Reverse sweep from a scalar root. Each node is visited once, in reverse
    /// creation order.
    pub fn backward(&mut self, root: Var) -> Result<()> {
        if self.value(root).shape() != (1, 1) {
            return Err(Error::contract(format!(
                "backward requires a scalar root, got shape {:?}",
                self.value(root).shape()
            )));
        }
        let mut grads: Vec<Option<Matrix>> = vec![None; self.nodes.len()];
        if self.rg(root) {
            grads[root.0] = Some(Matrix::scalar(1.0));
        }
        for i in (0..=root.0).rev() {
            let Some(dy) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.requires_grad {
                grads[i] = Some(dy);
                continue;
            }
            self.propagate(node, &dy, &mut grads)?;
            grads[i] = Some(dy);
        }
        // Only differentiable nodes keep gradients.
        for (g, n) in grads.iter_mut().zip(&self.nodes) {
            if !n.requires_grad {
                *g = None;
            }
        }
        self.grads = grads;
        Ok(())
    }

    fn propagate(&self, node: &Node, dy: &Matrix, grads: &mut [Option<Matrix>]) -> Result<()> {
        let nodes = &self.nodes;
        let rg = |v: Var| nodes[v.0].requires_grad;
        let val = |v: Var| &nodes[v.0].value;
        let y = &node.value;
        match &node.op {
            Op::Leaf => {}
            Op::Affine { x, w, b } => {
                if rg(*x) {
                    let wv = val(*w);
                    let mut dx = Matrix::zeros(dy.rows(), wv.cols());
                    gemm(dy, false, wv, false, &mut dx, 1.0, 0.0);
                    Self::accumulate(grads, *x, dx);
                }
                if rg(*w) {
                    let xv = val(*x);
                    let mut dw = Matrix::zeros(dy.cols(), xv.cols());
                    gemm(dy, true, xv, false, &mut dw, 1.0, 0.0);
                    Self::accumulate(grads, *w, dw);
                }
                if rg(*b) {
                    Self::accumulate(grads, *b, dy.column_sums());
                }
            }
            Op::Tanh(a) => {
                if rg(*a) {
                    Self::accumulate(grads, *a, dy.zip_map(y, |g, t| g * (1.0 - t * t))?);
                }
            }
            Op::Relu(a) => {
                if rg(*a) {
                    let d = dy.zip_map(val(*a), |g, x| if x > 0.0 { g } else { 0.0 })?;
                    Self::accumulate(grads, *a, d);
                }
            }
            Op::Exp(a) => {
                if rg(*a) {
                    Self::accumulate(grads, *a, dy.zip_map(y, |g, e| g * e)?);
                }
            }
            Op::Ln(a) => {
                if rg(*a) {
                    Self::accumulate(grads, *a, dy.zip_map(val(*a), |g, x| g / x)?);
                }
            }
            Op::Softplus(a) => {
                if rg(*a) {
                    Self::accumulate(grads, *a, dy.zip_map(val(*a), |g, x| g * sigmoid(x))?);
                }
            }
            Op::Abs(a) => {
                if rg(*a) {
                    let d = dy.zip_map(val(*a), |g, x| {
                        if x > 0.0 {
                            g
                        } else if x < 0.0 {
                            -g
                        } else {
                            0.0
                        }
                    })?;
                    Self::accumulate(grads, *a, d);
                }
            }
            Op::Square(a) => {
                if rg(*a) {
                    Self::accumulate(grads, *a, dy.zip_map(val(*a), |g, x| 2.0 * g * x)?);
                }
            }
            Op::Add(a, b) => {
                if rg(*a) {
                    Self::accumulate(grads, *a, dy.clone());
                }
                if rg(*b) {
                    Self::accumulate(grads, *b, dy.clone());
                }
            }
            Op::Sub(a, b) => {
                if rg(*a) {
                    Self::accumulate(grads, *a, dy.clone());
                }
                if rg(*b) {
                    Self::accumulate(grads, *b, dy.scaled(-1.0));
                }
            }
            Op::Mul(a, b) => {
                if rg(*a) {
                    Self::accumulate(grads, *a, dy.zip_map(val(*b), |g, v| g * v)?);
                }
                if rg(*b) {
                    Self::accumulate(grads, *b, dy.zip_map(val(*a), |g, v| g * v)?);
                }
            }
            Op::Min(a, b) | Op::Max(a, b) => {
                let is_min = matches!(node.op, Op::Min(..));
                let (av, bv) = (val(*a), val(*b));
                let pick_a: Vec<bool> = av
                    .data()
                    .iter()
                    .zip(bv.data())
                    .map(|(x, z)| if is_min { x <= z } else { x >= z })
                    .collect();
                if rg(*a) {
                    let data = dy.data().iter().zip(&pick_a).map(|(g, &p)| if p { *g } else { 0.0 }).collect();
                    Self::accumulate(grads, *a, Matrix::from_vec(dy.rows(), dy.cols(), data)?);
                }
                if rg(*b) {
                    let data = dy.data().iter().zip(&pick_a).map(|(g, &p)| if p { 0.0 } else { *g }).collect();
                    Self::accumulate(grads, *b, Matrix::from_vec(dy.rows(), dy.cols(), data)?);
                }
            }
            Op::Scale(a, c) => {
                if rg(*a) {
                    Self::accumulate(grads, *a, dy.scaled(*c));
                }
            }
            Op::AddScalar(a) => {
                if rg(*a) {
                    Self::accumulate(grads, *a, dy.clone());
                }
            }
            Op::Clamp(a, lo, hi) => {
                if rg(*a) {
                    let d = dy.zip_map(val(*a), |g, x| if x > *lo && x < *hi { g } else { 0.0 })?;
                    Self::accumulate(grads, *a, d);
                }
            }
            Op::MulConst(a, c) => {
                if rg(*a) {
                    Self::accumulate(grads, *a, dy.zip_map(c, |g, m| g * m)?);
                }
            }
            Op::Sum(a) | Op::Mean(a) => {
                if rg(*a) {
                    let (r, c) = val(*a).shape();
                    let mut g = dy.item()?;
                    if matches!(node.op, Op::Mean(_)) {
                        g /= (r * c) as f64;
                    }
                    Self::accumulate(grads, *a, Matrix::filled(r, c, g));
                }
            }
            Op::RowSum(a) => {
                if rg(*a) {
                    let (r, c) = val(*a).shape();
                    let mut d = Matrix::zeros(r, c);
                    for i in 0..r {
                        d.row_mut(i).fill(dy.get(i, 0));
                    }
                    Self::accumulate(grads, *a, d);
                }
            }
            Op::GroupSum(a, group) => {
                if rg(*a) {
                    let (r, c) = val(*a).shape();
                    let mut d = Matrix::zeros(r, c);
                    for i in 0..r {
                        d.row_mut(i).copy_from_slice(dy.row(i / group));
                    }
                    Self::accumulate(grads, *a, d);
                }
            }
            Op::ConcatCols(a, b) => {
                let ca = val(*a).cols();
                let cb = val(*b).cols();
                if rg(*a) {
                    let mut d = Matrix::zeros(dy.rows(), ca);
                    for i in 0..dy.rows() {
                        d.row_mut(i).copy_from_slice(&dy.row(i)[..ca]);
                    }
                    Self::accumulate(grads, *a, d);
                }
                if rg(*b) {
                    let mut d = Matrix::zeros(dy.rows(), cb);
                    for i in 0..dy.rows() {
                        d.row_mut(i).copy_from_slice(&dy.row(i)[ca..]);
                    }
                    Self::accumulate(grads, *b, d);
                }
            }
            Op::Gather(a, indices) => {
                if rg(*a) {
                    let (r, c) = val(*a).shape();
                    let mut d = Matrix::zeros(r, c);
                    for (k, &src) in indices.iter().enumerate() {
                        for (o, g) in d.row_mut(src).iter_mut().zip(dy.row(k)) {
                            *o += g;
                        }
                    }
                    Self::accumulate(grads, *a, d);
                }
            }
        }
        Ok(())
    }
}

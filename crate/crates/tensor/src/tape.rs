//! Define-by-run tape for reverse-mode differentiation.
//!
//! Every operation appends one node holding its output value; inputs always
//! precede outputs, so a single reverse sweep over the node list visits each
//! record exactly once in a valid order. A fresh tape is built per forward
//! pass.

use std::rc::Rc;

use crate::error::{Result, TensorError};
use crate::params::{Gradients, ParamId, ParamStore};
use crate::tensor::{matmul_into, matmul_nt_into, matmul_tn_into, Tensor};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// How the right operand of a binary op is broadcast against the left.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Bcast {
    Same,
    /// `1×C` repeated down the rows.
    Row,
    /// `N×1` repeated across the columns.
    Col,
    /// `1×1`.
    Scalar,
}

#[derive(Debug, Clone, Copy)]
enum Binary {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Debug, Clone, Copy)]
enum Unary {
    Relu,
    LeakyRelu(f64),
    Sigmoid,
    Exp,
    Sqrt,
    Square,
    Abs,
    Softplus,
    Powf(f64),
    Huber,
    ClampMin(f64),
    AddScalar(f64),
    MulScalar(f64),
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Param(ParamId),
    MatMul(Var, Var),
    Binary(Binary, Bcast, Var, Var),
    Unary(Unary, Var),
    ConcatCols(Vec<Var>),
    GatherRows(Var, Rc<[usize]>),
    SegmentSum(Var, Rc<[usize]>),
    SegmentSoftmax(Var, Rc<[usize]>),
    RepeatCols(Var, usize),
    RowNorm(Var),
    SumCols(Var),
    Sum(Var),
    Mean(Var),
    SoftmaxCrossEntropy(Var, Rc<[usize]>),
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Recorded computation graph.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

fn shape_err(op: &'static str, a: &Tensor, b: &Tensor) -> TensorError {
    TensorError::Shape {
        op,
        lhs: a.shape().to_vec(),
        rhs: b.shape().to_vec(),
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

#[inline]
fn huber(x: f64) -> f64 {
    if x.abs() < 1.0 {
        0.5 * x * x
    } else {
        x.abs() - 0.5
    }
}

#[inline]
fn signum0(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

impl Unary {
    fn forward(self, x: f64) -> f64 {
        match self {
            Unary::Relu => x.max(0.0),
            Unary::LeakyRelu(s) => {
                if x > 0.0 {
                    x
                } else {
                    s * x
                }
            }
            Unary::Sigmoid => sigmoid(x),
            Unary::Exp => x.exp(),
            Unary::Sqrt => x.sqrt(),
            Unary::Square => x * x,
            Unary::Abs => x.abs(),
            Unary::Softplus => softplus(x),
            Unary::Powf(p) => x.powf(p),
            Unary::Huber => huber(x),
            Unary::ClampMin(m) => x.max(m),
            Unary::AddScalar(s) => x + s,
            Unary::MulScalar(s) => x * s,
        }
    }

    /// Derivative given input `x` and output `y`.
    fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Unary::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Unary::LeakyRelu(s) => {
                if x > 0.0 {
                    1.0
                } else {
                    s
                }
            }
            Unary::Sigmoid => y * (1.0 - y),
            Unary::Exp => y,
            Unary::Sqrt => 0.5 / y,
            Unary::Square => 2.0 * x,
            Unary::Abs => signum0(x),
            Unary::Softplus => sigmoid(x),
            Unary::Powf(p) => p * x.powf(p - 1.0),
            Unary::Huber => {
                if x.abs() < 1.0 {
                    x
                } else {
                    signum0(x)
                }
            }
            Unary::ClampMin(m) => {
                if x > m {
                    1.0
                } else {
                    0.0
                }
            }
            Unary::AddScalar(_) => 1.0,
            Unary::MulScalar(s) => s,
        }
    }
}

impl Binary {
    fn name(self) -> &'static str {
        match self {
            Binary::Add => "add",
            Binary::Sub => "sub",
            Binary::Mul => "mul",
            Binary::Div => "div",
        }
    }

    #[inline]
    fn forward(self, a: f64, b: f64) -> f64 {
        match self {
            Binary::Add => a + b,
            Binary::Sub => a - b,
            Binary::Mul => a * b,
            Binary::Div => a / b,
        }
    }

    /// Partial derivatives `(∂/∂a, ∂/∂b)`.
    #[inline]
    fn partials(self, a: f64, b: f64) -> (f64, f64) {
        match self {
            Binary::Add => (1.0, 1.0),
            Binary::Sub => (1.0, -1.0),
            Binary::Mul => (b, a),
            Binary::Div => (1.0 / b, -a / (b * b)),
        }
    }
}

impl Bcast {
    fn resolve(a: &Tensor, b: &Tensor) -> Option<Bcast> {
        let (ar, ac) = (a.rows(), a.cols());
        let (br, bc) = (b.rows(), b.cols());
        if ar == br && ac == bc {
            Some(Bcast::Same)
        } else if br == 1 && bc == 1 {
            Some(Bcast::Scalar)
        } else if br == 1 && bc == ac {
            Some(Bcast::Row)
        } else if bc == 1 && br == ar {
            Some(Bcast::Col)
        } else {
            None
        }
    }

    #[inline]
    fn index(self, r: usize, c: usize, cols: usize) -> usize {
        match self {
            Bcast::Same => r * cols + c,
            Bcast::Row => c,
            Bcast::Col => r,
            Bcast::Scalar => 0,
        }
    }
}

/// Adjoints of every tape node after a backward sweep.
pub struct Adjoints {
    grads: Vec<Option<Tensor>>,
}

impl Adjoints {
    /// Gradient of the loss with respect to `v`, if `v` was on a
    /// differentiable path.
    pub fn wrt(&self, v: Var) -> Option<&Tensor> {
        self.grads[v.0].as_ref()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// Records a constant; gradients never flow into it.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// Records a differentiable leaf that is not a registered parameter.
    /// Its gradient is available through [`Adjoints::wrt`].
    pub fn variable(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Binds a registered parameter onto the tape.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        self.push(store.get(id).clone(), Op::Param(id), true)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.cols() != tb.rows() {
            return Err(shape_err("matmul", ta, tb));
        }
        let mut out = Tensor::zeros(ta.rows(), tb.cols());
        matmul_into(ta, tb, &mut out);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::MatMul(a, b), rg))
    }

    fn binary(&mut self, kind: Binary, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        let bc = Bcast::resolve(ta, tb).ok_or_else(|| shape_err(kind.name(), ta, tb))?;
        let cols = ta.cols();
        let mut out = Tensor::zeros(ta.rows(), cols);
        let (ad, bd) = (ta.data(), tb.data());
        for r in 0..ta.rows() {
            for c in 0..cols {
                let i = r * cols + c;
                out.data_mut()[i] = kind.forward(ad[i], bd[bc.index(r, c, tb.cols())]);
            }
        }
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::Binary(kind, bc, a, b), rg))
    }

    /// Elementwise `a + b`; `b` may broadcast as a row, column, or scalar.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Binary::Add, a, b)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Binary::Sub, a, b)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Binary::Mul, a, b)
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Binary::Div, a, b)
    }

    fn unary(&mut self, kind: Unary, a: Var) -> Var {
        let out = self.value(a).map(|x| kind.forward(x));
        let rg = self.rg(a);
        self.push(out, Op::Unary(kind, a), rg)
    }

    pub fn add_scalar(&mut self, a: Var, s: f64) -> Var {
        self.unary(Unary::AddScalar(s), a)
    }

    pub fn mul_scalar(&mut self, a: Var, s: f64) -> Var {
        self.unary(Unary::MulScalar(s), a)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(Unary::Relu, a)
    }

    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Var {
        self.unary(Unary::LeakyRelu(slope), a)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(Unary::Sigmoid, a)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(Unary::Exp, a)
    }

    /// Square root; inputs must be positive for a finite gradient.
    pub fn sqrt(&mut self, a: Var) -> Var {
        self.unary(Unary::Sqrt, a)
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.unary(Unary::Square, a)
    }

    pub fn abs(&mut self, a: Var) -> Var {
        self.unary(Unary::Abs, a)
    }

    pub fn softplus(&mut self, a: Var) -> Var {
        self.unary(Unary::Softplus, a)
    }

    /// `a^p` for nonnegative `a` and `p ≥ 1`.
    pub fn powf(&mut self, a: Var, p: f64) -> Var {
        self.unary(Unary::Powf(p), a)
    }

    /// Unit-threshold Huber function applied elementwise.
    pub fn huber(&mut self, a: Var) -> Var {
        self.unary(Unary::Huber, a)
    }

    /// `max(a, m)`; zero gradient where clamped.
    pub fn clamp_min(&mut self, a: Var, m: f64) -> Var {
        self.unary(Unary::ClampMin(m), a)
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let Some(&first) = parts.first() else {
            return Err(TensorError::Shape {
                op: "concat_cols",
                lhs: vec![],
                rhs: vec![],
            });
        };
        let rows = self.value(first).rows();
        let mut total = 0;
        for &p in parts {
            let t = self.value(p);
            if t.rows() != rows {
                return Err(shape_err("concat_cols", self.value(first), t));
            }
            total += t.cols();
        }
        let mut out = Tensor::zeros(rows, total);
        let mut off = 0;
        for &p in parts {
            let t = &self.nodes[p.0].value;
            for r in 0..rows {
                out.row_mut(r)[off..off + t.cols()].copy_from_slice(t.row(r));
            }
            off += t.cols();
        }
        let rg = parts.iter().any(|&p| self.rg(p));
        Ok(self.push(out, Op::ConcatCols(parts.to_vec()), rg))
    }

    pub fn gather_rows(&mut self, a: Var, index: Rc<[usize]>) -> Result<Var> {
        let t = self.value(a);
        if let Some(&bad) = index.iter().find(|&&i| i >= t.rows()) {
            return Err(TensorError::Index {
                op: "gather_rows",
                index: bad,
                bound: t.rows(),
            });
        }
        let out = t.gather_rows(&index);
        let rg = self.rg(a);
        Ok(self.push(out, Op::GatherRows(a, index), rg))
    }

    fn check_segments(
        &self,
        op: &'static str,
        a: Var,
        segments: &[usize],
        num_segments: usize,
    ) -> Result<()> {
        let t = self.value(a);
        if segments.len() != t.rows() {
            return Err(TensorError::Shape {
                op,
                lhs: t.shape().to_vec(),
                rhs: vec![segments.len()],
            });
        }
        if let Some(&bad) = segments.iter().find(|&&s| s >= num_segments) {
            return Err(TensorError::Index {
                op,
                index: bad,
                bound: num_segments,
            });
        }
        Ok(())
    }

    /// Scatter-add: row `i` of `a` is added into output row `segments[i]`.
    pub fn segment_sum(
        &mut self,
        a: Var,
        segments: Rc<[usize]>,
        num_segments: usize,
    ) -> Result<Var> {
        self.check_segments("segment_sum", a, &segments, num_segments)?;
        let t = self.value(a);
        let mut out = Tensor::zeros(num_segments, t.cols());
        for (i, &s) in segments.iter().enumerate() {
            for (o, &v) in out.row_mut(s).iter_mut().zip(t.row(i)) {
                *o += v;
            }
        }
        let rg = self.rg(a);
        Ok(self.push(out, Op::SegmentSum(a, segments), rg))
    }

    /// Softmax over the rows sharing a segment id, independently per column.
    pub fn segment_softmax(
        &mut self,
        a: Var,
        segments: Rc<[usize]>,
        num_segments: usize,
    ) -> Result<Var> {
        self.check_segments("segment_softmax", a, &segments, num_segments)?;
        let t = self.value(a);
        let cols = t.cols();
        let mut max = Tensor::full(num_segments, cols, f64::NEG_INFINITY);
        for (i, &s) in segments.iter().enumerate() {
            for (m, &v) in max.row_mut(s).iter_mut().zip(t.row(i)) {
                *m = m.max(v);
            }
        }
        let mut out = Tensor::zeros(t.rows(), cols);
        let mut denom = Tensor::zeros(num_segments, cols);
        for (i, &s) in segments.iter().enumerate() {
            for c in 0..cols {
                let e = (t.get(i, c) - max.get(s, c)).exp();
                out.set(i, c, e);
                denom.data_mut()[s * cols + c] += e;
            }
        }
        for (i, &s) in segments.iter().enumerate() {
            for c in 0..cols {
                let v = out.get(i, c) / denom.get(s, c);
                out.set(i, c, v);
            }
        }
        let rg = self.rg(a);
        Ok(self.push(out, Op::SegmentSoftmax(a, segments), rg))
    }

    /// `N×H → N×(H·k)`, repeating each column `k` times in place
    /// (column `j` of the output reads column `j / k` of the input).
    pub fn repeat_cols(&mut self, a: Var, k: usize) -> Var {
        let t = self.value(a);
        let mut out = Tensor::zeros(t.rows(), t.cols() * k);
        for r in 0..t.rows() {
            let src = t.row(r).to_vec();
            for (j, o) in out.row_mut(r).iter_mut().enumerate() {
                *o = src[j / k];
            }
        }
        let rg = self.rg(a);
        self.push(out, Op::RepeatCols(a, k), rg)
    }

    /// Euclidean norm of each row, `N×C → N×1`.
    pub fn row_norm(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let data = (0..t.rows())
            .map(|r| t.row(r).iter().map(|x| x * x).sum::<f64>().sqrt())
            .collect();
        let rg = self.rg(a);
        self.push(Tensor::column(data), Op::RowNorm(a), rg)
    }

    /// Sum over the last axis, `N×C → N×1`.
    pub fn sum_cols(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let data = (0..t.rows()).map(|r| t.row(r).iter().sum()).collect();
        let rg = self.rg(a);
        self.push(Tensor::column(data), Op::SumCols(a), rg)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).sum();
        let rg = self.rg(a);
        self.push(Tensor::scalar(s), Op::Sum(a), rg)
    }

    /// Mean of all entries; the mean of an empty tensor is 0.
    pub fn mean(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let m = if t.is_empty() {
            0.0
        } else {
            t.sum() / t.len() as f64
        };
        let rg = self.rg(a);
        self.push(Tensor::scalar(m), Op::Mean(a), rg)
    }

    /// Mean multinomial negative log-likelihood of `labels` under
    /// `softmax(logits)` per row.
    pub fn softmax_cross_entropy(&mut self, logits: Var, labels: Rc<[usize]>) -> Result<Var> {
        let t = self.value(logits);
        if labels.len() != t.rows() {
            return Err(TensorError::Shape {
                op: "softmax_cross_entropy",
                lhs: t.shape().to_vec(),
                rhs: vec![labels.len()],
            });
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= t.cols()) {
            return Err(TensorError::Index {
                op: "softmax_cross_entropy",
                index: bad,
                bound: t.cols(),
            });
        }
        let mut total = 0.0;
        for (r, &y) in labels.iter().enumerate() {
            let row = t.row(r);
            let m = row.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
            let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
            total += lse - row[y];
        }
        let n = labels.len().max(1) as f64;
        let rg = self.rg(logits);
        Ok(self.push(
            Tensor::scalar(total / n),
            Op::SoftmaxCrossEntropy(logits, labels),
            rg,
        ))
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Adjoints> {
        let lv = self.value(loss);
        if lv.len() != 1 {
            return Err(TensorError::NotScalar(lv.shape().to_vec()));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::scalar(1.0));

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else {
                continue;
            };
            let node = &self.nodes[idx];
            if node.requires_grad {
                self.propagate(node, &g, &mut grads);
            }
            grads[idx] = Some(g);
        }
        Ok(Adjoints { grads })
    }

    /// Gradients of `loss` for every parameter in `store`; parameters not
    /// reached by the loss get zeros.
    pub fn gradients(&self, loss: Var, store: &ParamStore) -> Result<Gradients> {
        let adj = self.backward(loss)?;
        let mut out = Gradients::zeros_like(store).into_vec();
        for (node, g) in self.nodes.iter().zip(&adj.grads) {
            if let (Op::Param(id), Some(g)) = (&node.op, g) {
                out[id.index()].add_assign(g);
            }
        }
        Ok(Gradients::from_vec(out))
    }

    fn accumulate(&self, grads: &mut [Option<Tensor>], v: Var, delta: Tensor) {
        if !self.rg(v) {
            return;
        }
        match &mut grads[v.0] {
            Some(g) => g.add_assign(&delta),
            slot @ None => *slot = Some(delta),
        }
    }

    fn propagate(&self, node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) {
        match &node.op {
            Op::Leaf | Op::Param(_) => {}
            Op::MatMul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                if self.rg(*a) {
                    let mut ga = Tensor::zeros(ta.rows(), ta.cols());
                    matmul_nt_into(g, tb, &mut ga);
                    self.accumulate(grads, *a, ga);
                }
                if self.rg(*b) {
                    let mut gb = Tensor::zeros(tb.rows(), tb.cols());
                    matmul_tn_into(ta, g, &mut gb);
                    self.accumulate(grads, *b, gb);
                }
            }
            Op::Binary(kind, bc, a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let cols = ta.cols();
                let mut ga = Tensor::zeros(ta.rows(), cols);
                let mut gb = Tensor::zeros(tb.rows(), tb.cols());
                let (ad, bd, gd) = (ta.data(), tb.data(), g.data());
                for r in 0..ta.rows() {
                    for c in 0..cols {
                        let i = r * cols + c;
                        let j = bc.index(r, c, tb.cols());
                        let (da, db) = kind.partials(ad[i], bd[j]);
                        ga.data_mut()[i] = gd[i] * da;
                        gb.data_mut()[j] += gd[i] * db;
                    }
                }
                self.accumulate(grads, *a, ga);
                self.accumulate(grads, *b, gb);
            }
            Op::Unary(kind, a) => {
                let x = self.value(*a);
                let y = &node.value;
                let mut ga = Tensor::zeros(x.rows(), x.cols());
                for (i, o) in ga.data_mut().iter_mut().enumerate() {
                    *o = g.data()[i] * kind.derivative(x.data()[i], y.data()[i]);
                }
                self.accumulate(grads, *a, ga);
            }
            Op::ConcatCols(parts) => {
                let mut off = 0;
                for &p in parts {
                    let t = self.value(p);
                    let mut gp = Tensor::zeros(t.rows(), t.cols());
                    for r in 0..t.rows() {
                        gp.row_mut(r)
                            .copy_from_slice(&g.row(r)[off..off + t.cols()]);
                    }
                    off += t.cols();
                    self.accumulate(grads, p, gp);
                }
            }
            Op::GatherRows(a, index) => {
                let t = self.value(*a);
                let mut ga = Tensor::zeros(t.rows(), t.cols());
                for (o, &i) in index.iter().enumerate() {
                    for (d, &v) in ga.row_mut(i).iter_mut().zip(g.row(o)) {
                        *d += v;
                    }
                }
                self.accumulate(grads, *a, ga);
            }
            Op::SegmentSum(a, segments) => {
                let t = self.value(*a);
                let mut ga = Tensor::zeros(t.rows(), t.cols());
                for (i, &s) in segments.iter().enumerate() {
                    ga.row_mut(i).copy_from_slice(g.row(s));
                }
                self.accumulate(grads, *a, ga);
            }
            Op::SegmentSoftmax(a, segments) => {
                let y = &node.value;
                let cols = y.cols();
                let nseg = segments.iter().max().map_or(0, |m| m + 1);
                let mut dot = Tensor::zeros(nseg, cols);
                for (i, &s) in segments.iter().enumerate() {
                    for c in 0..cols {
                        dot.data_mut()[s * cols + c] += y.get(i, c) * g.get(i, c);
                    }
                }
                let mut ga = Tensor::zeros(y.rows(), cols);
                for (i, &s) in segments.iter().enumerate() {
                    for c in 0..cols {
                        ga.set(i, c, y.get(i, c) * (g.get(i, c) - dot.get(s, c)));
                    }
                }
                self.accumulate(grads, *a, ga);
            }
            Op::RepeatCols(a, k) => {
                let t = self.value(*a);
                let mut ga = Tensor::zeros(t.rows(), t.cols());
                for r in 0..t.rows() {
                    for (j, &v) in g.row(r).iter().enumerate() {
                        ga.row_mut(r)[j / k] += v;
                    }
                }
                self.accumulate(grads, *a, ga);
            }
            Op::RowNorm(a) => {
                let t = self.value(*a);
                let mut ga = Tensor::zeros(t.rows(), t.cols());
                for r in 0..t.rows() {
                    let n = node.value.get(r, 0);
                    if n > 0.0 {
                        let s = g.get(r, 0) / n;
                        for (d, &x) in ga.row_mut(r).iter_mut().zip(t.row(r)) {
                            *d = s * x;
                        }
                    }
                }
                self.accumulate(grads, *a, ga);
            }
            Op::SumCols(a) => {
                let t = self.value(*a);
                let mut ga = Tensor::zeros(t.rows(), t.cols());
                for r in 0..t.rows() {
                    let s = g.get(r, 0);
                    ga.row_mut(r).iter_mut().for_each(|d| *d = s);
                }
                self.accumulate(grads, *a, ga);
            }
            Op::Sum(a) => {
                let t = self.value(*a);
                let ga = Tensor::full(t.rows(), t.cols(), g.data()[0]);
                self.accumulate(grads, *a, ga);
            }
            Op::Mean(a) => {
                let t = self.value(*a);
                if !t.is_empty() {
                    let ga = Tensor::full(t.rows(), t.cols(), g.data()[0] / t.len() as f64);
                    self.accumulate(grads, *a, ga);
                }
            }
            Op::SoftmaxCrossEntropy(a, labels) => {
                let t = self.value(*a);
                let n = labels.len().max(1) as f64;
                let scale = g.data()[0] / n;
                let mut ga = Tensor::zeros(t.rows(), t.cols());
                for (r, &y) in labels.iter().enumerate() {
                    let row = t.row(r);
                    let m = row.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
                    let z: f64 = row.iter().map(|v| (v - m).exp()).sum();
                    for (c, d) in ga.row_mut(r).iter_mut().enumerate() {
                        let p = (row[c] - m).exp() / z;
                        *d = scale * (p - if c == y { 1.0 } else { 0.0 });
                    }
                }
                self.accumulate(grads, *a, ga);
            }
        }
    }
}

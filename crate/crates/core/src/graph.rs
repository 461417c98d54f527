//! Tape-based reverse-mode automatic differentiation over [`Tensor`] values.
//!
//! A [`Graph`] is a flat tape of nodes built per forward pass. Every op
//! records its parents by id; `backward` walks the tape once in reverse,
//! accumulating gradients additively so diamond-shaped reuse is handled
//! without revisiting nodes.

use crate::error::{Error, Result};
use crate::special::{gamma_quantile, gamma_quantile_dalpha};
use crate::tensor::{broadcast_zip, reduce_to_shape, Tensor};
use statrs::function::gamma::digamma;

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct NodeId(usize);

// Detach keeps its parent id and AddScalar its constant for debug dumps,
// though backward needs neither.
#[allow(dead_code)]
#[derive(Debug)]
enum Op {
    Leaf,
    Detach(NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Div(NodeId, NodeId),
    MatMul(NodeId, NodeId),
    Neg(NodeId),
    Relu(NodeId),
    Sigmoid(NodeId),
    Softplus(NodeId),
    Exp(NodeId),
    Log(NodeId),
    Abs(NodeId),
    Sin(NodeId),
    Cos(NodeId),
    LnGamma(NodeId),
    Powf(NodeId, f64),
    Scale(NodeId, f64),
    AddScalar(NodeId, f64),
    SumAll(NodeId),
    MeanAll(NodeId),
    RowSum(NodeId),
    LogSoftmax(NodeId),
    Softmax(NodeId),
    SliceCols(NodeId, usize, usize),
    ConcatCols(Vec<NodeId>),
    /// Elementwise gamma quantile g = P^{-1}(alpha, u) at fixed probabilities
    /// u; the derivative in alpha comes from the implicit function theorem.
    GammaQuantile(NodeId),
}

struct NodeRec {
    value: Tensor,
    op: Op,
}

#[derive(Default)]
pub struct Graph {
    nodes: Vec<NodeRec>,
}

/// Per-node gradients produced by [`Graph::backward`]. Nodes the loss does
/// not reach hold no entry and read back as zeros.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, graph: &Graph, id: NodeId) -> Tensor {
        match &self.grads[id.0] {
            Some(g) => g.clone(),
            None => Tensor::zeros(graph.value(id).shape()),
        }
    }

    pub fn opt(&self, id: NodeId) -> Option<&Tensor> {
        self.grads[id.0].as_ref()
    }
}

pub(crate) fn sigmoid_scalar(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn softplus_scalar(x: f64) -> f64 {
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

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    fn push(&mut self, value: Tensor, op: Op) -> NodeId {
        self.nodes.push(NodeRec { value, op });
        NodeId(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, value: Tensor) -> NodeId {
        self.push(value, Op::Leaf)
    }

    pub fn scalar(&mut self, v: f64) -> NodeId {
        self.leaf(Tensor::scalar(v))
    }

    /// Identity in value, barrier in gradient: backward stops here.
    pub fn detach(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).clone();
        self.push(v, Op::Detach(a))
    }

    fn binary(
        &mut self,
        name: &'static str,
        a: NodeId,
        b: NodeId,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<NodeId> {
        let v = broadcast_zip(name, self.value(a), self.value(b), f)?;
        Ok(self.push(v, op))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    pub fn div(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary("div", a, b, |x, y| x / y, Op::Div(a, b))
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.value(a).matmul(self.value(b))?;
        Ok(self.push(v, Op::MatMul(a, b)))
    }

    fn unary(&mut self, a: NodeId, f: impl Fn(f64) -> f64, op: Op) -> NodeId {
        let v = self.value(a).map(f);
        self.push(v, op)
    }

    pub fn neg(&mut self, a: NodeId) -> NodeId {
        self.unary(a, |x| -x, Op::Neg(a))
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        self.unary(a, |x| x.max(0.0), Op::Relu(a))
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        self.unary(a, sigmoid_scalar, Op::Sigmoid(a))
    }

    pub fn softplus(&mut self, a: NodeId) -> NodeId {
        self.unary(a, softplus_scalar, Op::Softplus(a))
    }

    pub fn exp(&mut self, a: NodeId) -> NodeId {
        self.unary(a, f64::exp, Op::Exp(a))
    }

    pub fn log(&mut self, a: NodeId) -> NodeId {
        self.unary(a, f64::ln, Op::Log(a))
    }

    pub fn abs(&mut self, a: NodeId) -> NodeId {
        self.unary(a, f64::abs, Op::Abs(a))
    }

    pub fn sin(&mut self, a: NodeId) -> NodeId {
        self.unary(a, f64::sin, Op::Sin(a))
    }

    pub fn cos(&mut self, a: NodeId) -> NodeId {
        self.unary(a, f64::cos, Op::Cos(a))
    }

    pub fn ln_gamma(&mut self, a: NodeId) -> NodeId {
        self.unary(a, statrs::function::gamma::ln_gamma, Op::LnGamma(a))
    }

    pub fn powf(&mut self, a: NodeId, p: f64) -> NodeId {
        self.unary(a, |x| x.powf(p), Op::Powf(a, p))
    }

    pub fn scale(&mut self, a: NodeId, c: f64) -> NodeId {
        self.unary(a, |x| c * x, Op::Scale(a, c))
    }

    pub fn add_scalar(&mut self, a: NodeId, c: f64) -> NodeId {
        self.unary(a, |x| x + c, Op::AddScalar(a, c))
    }

    pub fn sum_all(&mut self, a: NodeId) -> NodeId {
        let s: f64 = self.value(a).data().iter().sum();
        self.push(Tensor::scalar(s), Op::SumAll(a))
    }

    pub fn mean_all(&mut self, a: NodeId) -> NodeId {
        let t = self.value(a);
        let s: f64 = t.data().iter().sum();
        let n = t.len() as f64;
        self.push(Tensor::scalar(s / n), Op::MeanAll(a))
    }

    /// Row sums of a matrix: [m, n] -> [m, 1].
    pub fn row_sum(&mut self, a: NodeId) -> Result<NodeId> {
        let t = self.value(a);
        if t.rank() != 2 {
            return Err(Error::invalid(format!(
                "row_sum expects a matrix, got shape {:?}",
                t.shape()
            )));
        }
        let m = t.shape()[0];
        let mut out = vec![0.0; m];
        for i in 0..m {
            out[i] = t.row(i).iter().sum();
        }
        let v = Tensor::new(vec![m, 1], out)?;
        Ok(self.push(v, Op::RowSum(a)))
    }

    fn rowwise_softmax(t: &Tensor, log_form: bool) -> Result<Tensor> {
        if t.rank() != 2 {
            return Err(Error::invalid(format!(
                "softmax expects a matrix of logits, got shape {:?}",
                t.shape()
            )));
        }
        let (m, n) = (t.shape()[0], t.shape()[1]);
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let row = t.row(i);
            let mx = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = row.iter().map(|&x| (x - mx).exp()).sum::<f64>().ln() + mx;
            for (j, &x) in row.iter().enumerate() {
                out[i * n + j] = if log_form { x - lse } else { (x - lse).exp() };
            }
        }
        Tensor::new(vec![m, n], out)
    }

    /// Row-wise log-softmax of logits (numerically stable via max-shift).
    pub fn log_softmax(&mut self, a: NodeId) -> Result<NodeId> {
        let v = Self::rowwise_softmax(self.value(a), true)?;
        Ok(self.push(v, Op::LogSoftmax(a)))
    }

    /// Row-wise softmax of logits.
    pub fn softmax(&mut self, a: NodeId) -> Result<NodeId> {
        let v = Self::rowwise_softmax(self.value(a), false)?;
        Ok(self.push(v, Op::Softmax(a)))
    }

    /// Columns [start, end) of a matrix.
    pub fn slice_cols(&mut self, a: NodeId, start: usize, end: usize) -> Result<NodeId> {
        let t = self.value(a);
        if t.rank() != 2 || end > t.shape()[1] || start >= end {
            return Err(Error::invalid(format!(
                "slice_cols [{start}, {end}) out of bounds for shape {:?}",
                t.shape()
            )));
        }
        let (m, n) = (t.shape()[0], t.shape()[1]);
        let w = end - start;
        let mut out = vec![0.0; m * w];
        for i in 0..m {
            out[i * w..(i + 1) * w].copy_from_slice(&t.data()[i * n + start..i * n + end]);
        }
        let v = Tensor::new(vec![m, w], out)?;
        Ok(self.push(v, Op::SliceCols(a, start, end)))
    }

    /// Horizontal concatenation of matrices with equal row counts.
    pub fn concat_cols(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        if parts.is_empty() {
            return Err(Error::invalid("concat_cols needs at least one input"));
        }
        let m = self.value(parts[0]).shape()[0];
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let t = self.value(p);
            if t.rank() != 2 || t.shape()[0] != m {
                return Err(Error::ShapeMismatch {
                    op: "concat_cols",
                    left: self.value(parts[0]).shape().to_vec(),
                    right: t.shape().to_vec(),
                });
            }
            widths.push(t.shape()[1]);
        }
        let total: usize = widths.iter().sum();
        let mut out = vec![0.0; m * total];
        for i in 0..m {
            let mut off = 0;
            for (&p, &w) in parts.iter().zip(&widths) {
                out[i * total + off..i * total + off + w].copy_from_slice(self.value(p).row(i));
                off += w;
            }
        }
        let v = Tensor::new(vec![m, total], out)?;
        Ok(self.push(v, Op::ConcatCols(parts.to_vec())))
    }

    /// Elementwise Gamma(alpha, 1) quantile at fixed probabilities `u`
    /// (same shape as alpha). Gradients reach alpha through the implicit
    /// derivative of the quantile; `u` is a constant.
    pub fn gamma_quantile_of(&mut self, alpha: NodeId, u: &Tensor) -> Result<NodeId> {
        let at = self.value(alpha);
        if at.shape() != u.shape() {
            return Err(Error::ShapeMismatch {
                op: "gamma_quantile",
                left: at.shape().to_vec(),
                right: u.shape().to_vec(),
            });
        }
        let mut out = Vec::with_capacity(at.len());
        for (&a, &p) in at.data().iter().zip(u.data()) {
            out.push(gamma_quantile(a, p)?);
        }
        let v = Tensor::new(at.shape().to_vec(), out)?;
        Ok(self.push(v, Op::GammaQuantile(alpha)))
    }

    /// x·W + b with b broadcast over rows.
    pub fn affine(&mut self, x: NodeId, w: NodeId, b: NodeId) -> Result<NodeId> {
        let xw = self.matmul(x, w)?;
        self.add(xw, b)
    }

    pub fn backward(&self, loss: NodeId) -> Result<Gradients> {
        let lt = self.value(loss);
        if !lt.is_scalar() {
            return Err(Error::invalid(format!(
                "backward requires a scalar loss, got shape {:?}",
                lt.shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::ones(lt.shape()));

        for id in (0..=loss.0).rev() {
            let Some(g) = grads[id].take() else { continue };
            self.accumulate_parents(id, &g, &mut grads)?;
            grads[id] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn accumulate_parents(
        &self,
        id: usize,
        g: &Tensor,
        grads: &mut [Option<Tensor>],
    ) -> Result<()> {
        let accum = |grads: &mut [Option<Tensor>], p: NodeId, delta: Tensor| {
            match &mut grads[p.0] {
                Some(acc) => {
                    debug_assert_eq!(acc.shape(), delta.shape());
                    for (a, d) in acc.data_mut().iter_mut().zip(delta.data()) {
                        *a += d;
                    }
                }
                slot @ None => *slot = Some(delta),
            }
        };
        // Reduce a full-output-shape gradient back onto a (possibly
        // broadcast) parent.
        let accum_reduced = |grads: &mut [Option<Tensor>], p: NodeId, full: Tensor| {
            let shaped = reduce_to_shape(&full, self.value(p).shape());
            accum(grads, p, shaped);
        };

        let value = &self.nodes[id].value;
        match &self.nodes[id].op {
            Op::Leaf | Op::Detach(_) => {}
            Op::Add(a, b) => {
                accum_reduced(grads, *a, g.clone());
                accum_reduced(grads, *b, g.clone());
            }
            Op::Sub(a, b) => {
                accum_reduced(grads, *a, g.clone());
                accum_reduced(grads, *b, g.map(|x| -x));
            }
            Op::Mul(a, b) => {
                let da = broadcast_zip("mul_bwd", g, self.value(*b), |x, y| x * y)?;
                let db = broadcast_zip("mul_bwd", g, self.value(*a), |x, y| x * y)?;
                accum_reduced(grads, *a, da);
                accum_reduced(grads, *b, db);
            }
            Op::Div(a, b) => {
                let da = broadcast_zip("div_bwd", g, self.value(*b), |x, y| x / y)?;
                // d(a/b)/db = -a/b^2 = -value/b
                let gv = broadcast_zip("div_bwd", g, value, |x, y| x * y)?;
                let db = broadcast_zip("div_bwd", &gv, self.value(*b), |x, y| -x / y)?;
                accum_reduced(grads, *a, da);
                accum_reduced(grads, *b, db);
            }
            Op::MatMul(a, b) => {
                let bt = self.value(*b).transpose()?;
                let at = self.value(*a).transpose()?;
                let da = g.matmul(&bt)?;
                let db = at.matmul(g)?;
                accum(grads, *a, reshape_like(da, self.value(*a))?);
                accum(grads, *b, reshape_like(db, self.value(*b))?);
            }
            Op::Neg(a) => accum(grads, *a, g.map(|x| -x)),
            Op::Relu(a) => {
                let d = zip_same(g, self.value(*a), |gi, x| if x > 0.0 { gi } else { 0.0 });
                accum(grads, *a, d);
            }
            Op::Sigmoid(a) => {
                let d = zip_same(g, value, |gi, s| gi * s * (1.0 - s));
                accum(grads, *a, d);
            }
            Op::Softplus(a) => {
                let d = zip_same(g, self.value(*a), |gi, x| gi * sigmoid_scalar(x));
                accum(grads, *a, d);
            }
            Op::Exp(a) => accum(grads, *a, zip_same(g, value, |gi, e| gi * e)),
            Op::Log(a) => accum(grads, *a, zip_same(g, self.value(*a), |gi, x| gi / x)),
            Op::Abs(a) => {
                let d = zip_same(g, self.value(*a), |gi, x| gi * x.signum());
                accum(grads, *a, d);
            }
            Op::Sin(a) => accum(grads, *a, zip_same(g, self.value(*a), |gi, x| gi * x.cos())),
            Op::Cos(a) => accum(grads, *a, zip_same(g, self.value(*a), |gi, x| -gi * x.sin())),
            Op::LnGamma(a) => {
                let d = zip_same(g, self.value(*a), |gi, x| gi * digamma(x));
                accum(grads, *a, d);
            }
            Op::Powf(a, p) => {
                let p = *p;
                let d = zip_same(g, self.value(*a), |gi, x| gi * p * x.powf(p - 1.0));
                accum(grads, *a, d);
            }
            Op::Scale(a, c) => {
                let c = *c;
                accum(grads, *a, g.map(|x| c * x));
            }
            Op::AddScalar(a, _) => accum(grads, *a, g.clone()),
            Op::SumAll(a) => {
                let gv = g.scalar_value();
                accum(grads, *a, Tensor::filled(self.value(*a).shape(), gv));
            }
            Op::MeanAll(a) => {
                let n = self.value(*a).len() as f64;
                let gv = g.scalar_value() / n;
                accum(grads, *a, Tensor::filled(self.value(*a).shape(), gv));
            }
            Op::RowSum(a) => {
                let pt = self.value(*a);
                let (m, n) = (pt.shape()[0], pt.shape()[1]);
                let mut d = vec![0.0; m * n];
                for i in 0..m {
                    let gi = g.data()[i];
                    for j in 0..n {
                        d[i * n + j] = gi;
                    }
                }
                accum(grads, *a, Tensor::new(vec![m, n], d)?);
            }
            Op::LogSoftmax(a) => {
                // d = g - softmax(x) * rowsum(g)
                let (m, n) = (value.shape()[0], value.shape()[1]);
                let mut d = vec![0.0; m * n];
                for i in 0..m {
                    let gs: f64 = g.row(i).iter().sum();
                    for j in 0..n {
                        d[i * n + j] = g.at2(i, j) - value.at2(i, j).exp() * gs;
                    }
                }
                accum(grads, *a, Tensor::new(vec![m, n], d)?);
            }
            Op::Softmax(a) => {
                // d = s ⊙ (g - rowsum(g ⊙ s))
                let (m, n) = (value.shape()[0], value.shape()[1]);
                let mut d = vec![0.0; m * n];
                for i in 0..m {
                    let dot: f64 = g
                        .row(i)
                        .iter()
                        .zip(value.row(i))
                        .map(|(&x, &s)| x * s)
                        .sum();
                    for j in 0..n {
                        d[i * n + j] = value.at2(i, j) * (g.at2(i, j) - dot);
                    }
                }
                accum(grads, *a, Tensor::new(vec![m, n], d)?);
            }
            Op::SliceCols(a, start, end) => {
                let pt = self.value(*a);
                let (m, n) = (pt.shape()[0], pt.shape()[1]);
                let w = end - start;
                let mut d = vec![0.0; m * n];
                for i in 0..m {
                    d[i * n + start..i * n + end].copy_from_slice(&g.data()[i * w..(i + 1) * w]);
                }
                accum(grads, *a, Tensor::new(vec![m, n], d)?);
            }
            Op::ConcatCols(parts) => {
                let total = value.shape()[1];
                let m = value.shape()[0];
                let mut off = 0;
                for &p in parts {
                    let w = self.value(p).shape()[1];
                    let mut d = vec![0.0; m * w];
                    for i in 0..m {
                        d[i * w..(i + 1) * w]
                            .copy_from_slice(&g.data()[i * total + off..i * total + off + w]);
                    }
                    accum(grads, p, Tensor::new(vec![m, w], d)?);
                    off += w;
                }
            }
            Op::GammaQuantile(a) => {
                let d = zip_same3(g, self.value(*a), value, |gi, alpha, x| {
                    gi * gamma_quantile_dalpha(alpha, x)
                });
                accum(grads, *a, d);
            }
        }
        Ok(())
    }
}

fn zip_same(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    debug_assert_eq!(a.shape(), b.shape());
    let data = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| f(x, y))
        .collect();
    Tensor::new(a.shape().to_vec(), data).expect("same-shape zip")
}

fn zip_same3(a: &Tensor, b: &Tensor, c: &Tensor, f: impl Fn(f64, f64, f64) -> f64) -> Tensor {
    debug_assert_eq!(a.shape(), b.shape());
    debug_assert_eq!(a.shape(), c.shape());
    let data = a
        .data()
        .iter()
        .zip(b.data())
        .zip(c.data())
        .map(|((&x, &y), &z)| f(x, y, z))
        .collect();
    Tensor::new(a.shape().to_vec(), data).expect("same-shape zip")
}

/// Matmul backward yields 2D tensors; fold back to the parent's rank
/// (a vector parent gets a vector gradient).
fn reshape_like(t: Tensor, like: &Tensor) -> Result<Tensor> {
    if t.shape() == like.shape() {
        return Ok(t);
    }
    if t.len() != like.len() {
        return Err(Error::ShapeMismatch {
            op: "matmul_bwd",
            left: t.shape().to_vec(),
            right: like.shape().to_vec(),
        });
    }
    Tensor::new(like.shape().to_vec(), t.into_data())
}

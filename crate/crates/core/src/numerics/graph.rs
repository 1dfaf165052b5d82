//! Reverse-mode differentiation over an append-only node list.
//!
//! Every node is pushed after its operands, so node order is a topological
//! order and the backward sweep is a single reverse pass over the list.

use rand::Rng;

use super::params::{Gradients, ParamId, ParamStore};
use super::tensor::{gemm_acc, Tensor};
use crate::error::{Error, Result};

/// GELU tanh-approximation constant `sqrt(2/pi)`.
pub const GELU_SQRT_2_OVER_PI: f64 = 0.797_884_560_802_865_4;
/// Cubic coefficient of the GELU tanh approximation.
pub const GELU_CUBIC: f64 = 0.044_715;

/// Additive attention bias for hidden key positions.
pub const MASKED_SCORE: f64 = -1.0e9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

enum Value {
    Owned(Tensor),
    Param(ParamId),
}

enum Op {
    Leaf,
    MatMul { a: Var, b: Var, b_t: bool },
    Add(Var, Var),
    AddRow(Var, Var),
    Scale(Var, f64),
    Softmax(Var),
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Vec<f64>,
        rstd: Vec<f64>,
    },
    Gelu(Var),
    Tanh(Var),
    Gather { table: Var, ids: Vec<usize> },
    CrossEntropy {
        logits: Var,
        labels: Vec<usize>,
        probs: Vec<f64>,
    },
    Dropout { x: Var, mask: Vec<f64> },
    SliceCols { x: Var, start: usize },
    ConcatCols(Vec<Var>),
    #[cfg(test)]
    FaultyTanh(Var),
}

struct Node {
    value: Value,
    op: Op,
    needs_grad: bool,
}

pub struct Graph<'p> {
    params: Option<&'p ParamStore>,
    nodes: Vec<Node>,
}

impl<'p> Graph<'p> {
    pub fn new(params: &'p ParamStore) -> Self {
        Self {
            params: Some(params),
            nodes: Vec::new(),
        }
    }

    /// A graph with no parameter store; only constants can be leaves.
    pub fn detached() -> Self {
        Self {
            params: None,
            nodes: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        match &self.nodes[v.0].value {
            Value::Owned(t) => t,
            Value::Param(id) => self
                .params
                .expect("parameter node without a store")
                .value(*id),
        }
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.value(v).shape()
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value: Value::Owned(value),
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn ng(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        assert!(self.params.is_some(), "param() on a detached graph");
        self.nodes.push(Node {
            value: Value::Param(id),
            op: Op::Leaf,
            needs_grad: true,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, false)
    }

    /// `a (m×k) · b (k×n)`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.matmul_impl(a, b, false)
    }

    /// `a (m×k) · bᵀ` where `b` is stored `n×k`.
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Result<Var> {
        self.matmul_impl(a, b, true)
    }

    fn matmul_impl(&mut self, a: Var, b: Var, b_t: bool) -> Result<Var> {
        let op = if b_t { "matmul_t" } else { "matmul" };
        let (m, k) = self.value(a).require_matrix(op)?;
        let (br, bc) = self.value(b).require_matrix(op)?;
        let (bk, n) = if b_t { (bc, br) } else { (br, bc) };
        if k != bk {
            return Err(Error::Shape {
                op,
                lhs: self.shape(a).to_vec(),
                rhs: self.shape(b).to_vec(),
            });
        }
        let mut out = vec![0.0; m * n];
        gemm_acc(m, k, n, self.value(a).data(), false, self.value(b).data(), b_t, &mut out);
        let t = Tensor::matrix(m, n, out)?;
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(t, Op::MatMul { a, b, b_t }, ng))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return Err(Error::Shape {
                op: "add",
                lhs: va.shape().to_vec(),
                rhs: vb.shape().to_vec(),
            });
        }
        let data = va.data().iter().zip(vb.data()).map(|(x, y)| x + y).collect();
        let t = Tensor::new(va.shape().to_vec(), data)?;
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(t, Op::Add(a, b), ng))
    }

    /// Add a vector to every row of a matrix (bias over the last axis).
    pub fn add_row(&mut self, a: Var, bias: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(bias));
        if vb.rank() != 1 || va.cols() != vb.len() || va.rank() != 2 {
            return Err(Error::Shape {
                op: "add_row",
                lhs: va.shape().to_vec(),
                rhs: vb.shape().to_vec(),
            });
        }
        let c = va.cols();
        let data = va
            .data()
            .iter()
            .enumerate()
            .map(|(i, x)| x + vb.data()[i % c])
            .collect();
        let t = Tensor::new(va.shape().to_vec(), data)?;
        let ng = self.ng(a) || self.ng(bias);
        Ok(self.push(t, Op::AddRow(a, bias), ng))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let va = self.value(a);
        let t = Tensor::new(va.shape().to_vec(), va.data().iter().map(|x| x * c).collect())
            .expect("same shape");
        let ng = self.ng(a);
        self.push(t, Op::Scale(a, c), ng)
    }

    /// Softmax over the last axis.
    pub fn softmax(&mut self, a: Var) -> Var {
        let va = self.value(a);
        let c = va.cols();
        let mut out = va.data().to_vec();
        if c > 0 {
            for row in out.chunks_mut(c) {
                softmax_in_place(row);
            }
        }
        let t = Tensor::new(va.shape().to_vec(), out).expect("same shape");
        let ng = self.ng(a);
        self.push(t, Op::Softmax(a), ng)
    }

    /// Layer normalization over the last axis with affine gain and bias.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: f64) -> Result<Var> {
        let vx = self.value(x);
        let c = vx.cols();
        let (vg, vb) = (self.value(gamma), self.value(beta));
        if vg.shape() != [c] || vb.shape() != [c] {
            return Err(Error::Shape {
                op: "layer_norm",
                lhs: vx.shape().to_vec(),
                rhs: vg.shape().to_vec(),
            });
        }
        let rows = if c == 0 { 0 } else { vx.len() / c };
        let mut xhat = vec![0.0; vx.len()];
        let mut rstd = vec![0.0; rows];
        let mut out = vec![0.0; vx.len()];
        for r in 0..rows {
            let row = &vx.data()[r * c..(r + 1) * c];
            let mean = row.iter().sum::<f64>() / c as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / c as f64;
            let rs = 1.0 / (var + eps).sqrt();
            rstd[r] = rs;
            for j in 0..c {
                let h = (row[j] - mean) * rs;
                xhat[r * c + j] = h;
                out[r * c + j] = h * vg.data()[j] + vb.data()[j];
            }
        }
        let t = Tensor::new(vx.shape().to_vec(), out)?;
        let ng = self.ng(x) || self.ng(gamma) || self.ng(beta);
        Ok(self.push(
            t,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                rstd,
            },
            ng,
        ))
    }

    /// GELU, tanh approximation:
    /// `0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3)))`.
    pub fn gelu(&mut self, a: Var) -> Var {
        let va = self.value(a);
        let data = va.data().iter().map(|&x| gelu(x)).collect();
        let t = Tensor::new(va.shape().to_vec(), data).expect("same shape");
        let ng = self.ng(a);
        self.push(t, Op::Gelu(a), ng)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let va = self.value(a);
        let data = va.data().iter().map(|x| x.tanh()).collect();
        let t = Tensor::new(va.shape().to_vec(), data).expect("same shape");
        let ng = self.ng(a);
        self.push(t, Op::Tanh(a), ng)
    }

    /// Rows of `table` selected by `ids`; the gradient scatter-adds back.
    pub fn gather(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let vt = self.value(table);
        let (r, c) = vt.require_matrix("gather")?;
        let mut out = Vec::with_capacity(ids.len() * c);
        for &id in ids {
            if id >= r {
                return Err(Error::Shape {
                    op: "gather",
                    lhs: vt.shape().to_vec(),
                    rhs: vec![id],
                });
            }
            out.extend_from_slice(vt.row(id));
        }
        let t = Tensor::matrix(ids.len(), c, out)?;
        let ng = self.ng(table);
        Ok(self.push(
            t,
            Op::Gather {
                table,
                ids: ids.to_vec(),
            },
            ng,
        ))
    }

    /// Mean softmax cross-entropy of `logits` rows against class `labels`.
    pub fn cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let vl = self.value(logits);
        let (m, c) = vl.require_matrix("cross_entropy")?;
        if m != labels.len() || m == 0 {
            return Err(Error::Shape {
                op: "cross_entropy",
                lhs: vl.shape().to_vec(),
                rhs: vec![labels.len()],
            });
        }
        let mut probs = vl.data().to_vec();
        let mut loss = 0.0;
        for (i, row) in probs.chunks_mut(c).enumerate() {
            let y = labels[i];
            if y >= c {
                return Err(Error::Shape {
                    op: "cross_entropy",
                    lhs: vec![m, c],
                    rhs: vec![y],
                });
            }
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = row.iter().map(|v| (v - max).exp()).sum::<f64>().ln() + max;
            loss += lse - row[y];
            for v in row.iter_mut() {
                *v = (*v - lse).exp();
            }
        }
        let t = Tensor::scalar(loss / m as f64);
        let ng = self.ng(logits);
        Ok(self.push(
            t,
            Op::CrossEntropy {
                logits,
                labels: labels.to_vec(),
                probs,
            },
            ng,
        ))
    }

    /// Inverted dropout. A zero rate returns `a` unchanged and draws nothing
    /// from `rng`.
    pub fn dropout<R: Rng + ?Sized>(&mut self, a: Var, rate: f64, rng: &mut R) -> Var {
        if rate <= 0.0 {
            return a;
        }
        let keep = 1.0 - rate;
        let va = self.value(a);
        let mask: Vec<f64> = (0..va.len())
            .map(|_| if rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 })
            .collect();
        let data = va.data().iter().zip(&mask).map(|(x, m)| x * m).collect();
        let t = Tensor::new(va.shape().to_vec(), data).expect("same shape");
        let ng = self.ng(a);
        self.push(t, Op::Dropout { x: a, mask }, ng)
    }

    /// Columns `[start, start + len)` of a matrix.
    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let vx = self.value(x);
        let (m, c) = vx.require_matrix("slice_cols")?;
        if start + len > c {
            return Err(Error::Shape {
                op: "slice_cols",
                lhs: vx.shape().to_vec(),
                rhs: vec![start, len],
            });
        }
        let mut out = Vec::with_capacity(m * len);
        for r in 0..m {
            out.extend_from_slice(&vx.data()[r * c + start..r * c + start + len]);
        }
        let t = Tensor::matrix(m, len, out)?;
        let ng = self.ng(x);
        Ok(self.push(t, Op::SliceCols { x, start }, ng))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| Error::invalid("concat_cols of nothing"))?;
        let m = self.value(*first).require_matrix("concat_cols")?.0;
        let mut total = 0;
        for &p in parts {
            let (pm, pc) = self.value(p).require_matrix("concat_cols")?;
            if pm != m {
                return Err(Error::Shape {
                    op: "concat_cols",
                    lhs: self.shape(*first).to_vec(),
                    rhs: self.shape(p).to_vec(),
                });
            }
            total += pc;
        }
        let mut out = vec![0.0; m * total];
        let mut off = 0;
        for &p in parts {
            let vp = self.value(p);
            let pc = vp.cols();
            for r in 0..m {
                out[r * total + off..r * total + off + pc].copy_from_slice(vp.row(r));
            }
            off += pc;
        }
        let t = Tensor::matrix(m, total, out)?;
        let ng = parts.iter().any(|&p| self.ng(p));
        Ok(self.push(t, Op::ConcatCols(parts.to_vec()), ng))
    }

    #[cfg(test)]
    pub(crate) fn faulty_tanh(&mut self, a: Var) -> Var {
        let va = self.value(a);
        let data = va.data().iter().map(|x| x.tanh()).collect();
        let t = Tensor::new(va.shape().to_vec(), data).expect("same shape");
        let ng = self.ng(a);
        self.push(t, Op::FaultyTanh(a), ng)
    }

    /// Accumulate d(loss)/d(param) for every parameter reachable from `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let lv = self.value(loss);
        if lv.len() != 1 {
            return Err(Error::Shape {
                op: "backward (loss must be scalar)",
                lhs: lv.shape().to_vec(),
                rhs: vec![],
            });
        }
        let num_params = self.params.map(|p| p.len()).unwrap_or(0);
        let mut out = Gradients::new(num_params);
        let mut grads: Vec<Option<Vec<f64>>> = Vec::new();
        grads.resize_with(loss.0 + 1, || None);
        grads[loss.0] = Some(vec![1.0]);

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            match &node.op {
                Op::Leaf => {
                    if let Value::Param(id) = node.value {
                        out.accumulate(id, self.value(Var(i)).shape(), &g);
                    }
                }
                Op::MatMul { a, b, b_t } => {
                    let va = self.value(*a);
                    let vb = self.value(*b);
                    let (m, k) = (va.rows(), va.cols());
                    let n = self.value(Var(i)).cols();
                    if self.ng(*a) {
                        let mut da = vec![0.0; m * k];
                        // dA = dC · op(B)ᵀ
                        gemm_acc(m, n, k, &g, false, vb.data(), !*b_t, &mut da);
                        self.acc(&mut grads, *a, da);
                    }
                    if self.ng(*b) {
                        let mut db = vec![0.0; k * n];
                        if *b_t {
                            // B stored n×k: dB = dCᵀ · A
                            gemm_acc(n, m, k, &g, true, va.data(), false, &mut db);
                        } else {
                            gemm_acc(k, m, n, va.data(), true, &g, false, &mut db);
                        }
                        self.acc(&mut grads, *b, db);
                    }
                }
                Op::Add(a, b) => {
                    if self.ng(*a) {
                        self.acc(&mut grads, *a, g.clone());
                    }
                    if self.ng(*b) {
                        self.acc(&mut grads, *b, g);
                    }
                }
                Op::AddRow(a, bias) => {
                    if self.ng(*bias) {
                        let c = self.value(*bias).len();
                        let mut db = vec![0.0; c];
                        for (j, v) in g.iter().enumerate() {
                            db[j % c] += v;
                        }
                        self.acc(&mut grads, *bias, db);
                    }
                    if self.ng(*a) {
                        self.acc(&mut grads, *a, g);
                    }
                }
                Op::Scale(a, c) => {
                    let d = g.iter().map(|v| v * c).collect();
                    self.acc(&mut grads, *a, d);
                }
                Op::Softmax(a) => {
                    let y = self.value(Var(i));
                    let c = y.cols();
                    let mut d = vec![0.0; g.len()];
                    if c > 0 {
                        for ((dr, gr), yr) in d.chunks_mut(c).zip(g.chunks(c)).zip(y.data().chunks(c)) {
                            let s: f64 = gr.iter().zip(yr).map(|(a, b)| a * b).sum();
                            for j in 0..c {
                                dr[j] = yr[j] * (gr[j] - s);
                            }
                        }
                    }
                    self.acc(&mut grads, *a, d);
                }
                Op::LayerNorm {
                    x,
                    gamma,
                    beta,
                    xhat,
                    rstd,
                } => {
                    let vg = self.value(*gamma).data();
                    let c = vg.len();
                    let rows = rstd.len();
                    if self.ng(*gamma) {
                        let mut dg = vec![0.0; c];
                        for r in 0..rows {
                            for j in 0..c {
                                dg[j] += g[r * c + j] * xhat[r * c + j];
                            }
                        }
                        self.acc(&mut grads, *gamma, dg);
                    }
                    if self.ng(*beta) {
                        let mut db = vec![0.0; c];
                        for r in 0..rows {
                            for j in 0..c {
                                db[j] += g[r * c + j];
                            }
                        }
                        self.acc(&mut grads, *beta, db);
                    }
                    if self.ng(*x) {
                        let mut dx = vec![0.0; g.len()];
                        for r in 0..rows {
                            let o = r * c;
                            let mut mean_d = 0.0;
                            let mut mean_dx = 0.0;
                            for j in 0..c {
                                let dh = g[o + j] * vg[j];
                                mean_d += dh;
                                mean_dx += dh * xhat[o + j];
                            }
                            mean_d /= c as f64;
                            mean_dx /= c as f64;
                            for j in 0..c {
                                let dh = g[o + j] * vg[j];
                                dx[o + j] = rstd[r] * (dh - mean_d - xhat[o + j] * mean_dx);
                            }
                        }
                        self.acc(&mut grads, *x, dx);
                    }
                }
                Op::Gelu(a) => {
                    let xv = self.value(*a).data();
                    let d = g.iter().zip(xv).map(|(gv, &x)| gv * gelu_grad(x)).collect();
                    self.acc(&mut grads, *a, d);
                }
                Op::Tanh(a) => {
                    let y = self.value(Var(i)).data();
                    let d = g.iter().zip(y).map(|(gv, yv)| gv * (1.0 - yv * yv)).collect();
                    self.acc(&mut grads, *a, d);
                }
                #[cfg(test)]
                Op::FaultyTanh(a) => {
                    // Deliberately wrong derivative (missing the square).
                    let y = self.value(Var(i)).data();
                    let d = g.iter().zip(y).map(|(gv, yv)| gv * (1.0 - yv)).collect();
                    self.acc(&mut grads, *a, d);
                }
                Op::Gather { table, ids } => {
                    let vt = self.value(*table);
                    let c = vt.cols();
                    let mut d = vec![0.0; vt.len()];
                    for (r, &id) in ids.iter().enumerate() {
                        for j in 0..c {
                            d[id * c + j] += g[r * c + j];
                        }
                    }
                    self.acc(&mut grads, *table, d);
                }
                Op::CrossEntropy {
                    logits,
                    labels,
                    probs,
                } => {
                    let m = labels.len();
                    let c = probs.len() / m;
                    let scale = g[0] / m as f64;
                    let mut d = probs.clone();
                    for (r, &y) in labels.iter().enumerate() {
                        d[r * c + y] -= 1.0;
                    }
                    for v in &mut d {
                        *v *= scale;
                    }
                    self.acc(&mut grads, *logits, d);
                }
                Op::Dropout { x, mask } => {
                    let d = g.iter().zip(mask).map(|(a, b)| a * b).collect();
                    self.acc(&mut grads, *x, d);
                }
                Op::SliceCols { x, start } => {
                    let vx = self.value(*x);
                    let (m, c) = (vx.rows(), vx.cols());
                    let len = self.value(Var(i)).cols();
                    let mut d = vec![0.0; vx.len()];
                    for r in 0..m {
                        d[r * c + start..r * c + start + len].copy_from_slice(&g[r * len..(r + 1) * len]);
                    }
                    self.acc(&mut grads, *x, d);
                }
                Op::ConcatCols(parts) => {
                    let total = self.value(Var(i)).cols();
                    let m = self.value(Var(i)).rows();
                    let mut off = 0;
                    for &p in parts {
                        let pc = self.value(p).cols();
                        if self.ng(p) {
                            let mut d = vec![0.0; m * pc];
                            for r in 0..m {
                                d[r * pc..(r + 1) * pc]
                                    .copy_from_slice(&g[r * total + off..r * total + off + pc]);
                            }
                            self.acc(&mut grads, p, d);
                        }
                        off += pc;
                    }
                }
            }
        }
        Ok(out)
    }

    fn acc(&self, grads: &mut [Option<Vec<f64>>], v: Var, delta: Vec<f64>) {
        if !self.ng(v) {
            return;
        }
        match &mut grads[v.0] {
            Some(existing) => {
                for (e, d) in existing.iter_mut().zip(&delta) {
                    *e += d;
                }
            }
            slot @ None => *slot = Some(delta),
        }
    }
}

pub(crate) fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

pub fn gelu(x: f64) -> f64 {
    let inner = GELU_SQRT_2_OVER_PI * (x + GELU_CUBIC * x * x * x);
    0.5 * x * (1.0 + inner.tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let inner = GELU_SQRT_2_OVER_PI * (x + GELU_CUBIC * x * x * x);
    let t = inner.tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_SQRT_2_OVER_PI * (1.0 + 3.0 * GELU_CUBIC * x * x)
}

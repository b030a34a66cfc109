//! Reverse-mode autodiff over a fixed kernel set.
//!
//! The model architecture is static, so rather than a general expression
//! graph the tape records applications of a closed set of kernels, each with
//! a hand-written backward pass. A `Tape` is single-writer: one forward pass
//! builds it, one `backward` call consumes it. Gradients accumulate
//! additively when a value feeds several consumers.

use super::linalg::{self, dot};
use super::tensor::{BitMatrix, Tensor};
use crate::error::{contract, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

/// How an attention mask constrains each row.
#[derive(Clone, Debug)]
enum AttnPattern {
    /// Every row attends to exactly the rows `[0, c)`. This is the
    /// in-context mask (context rows and queries all attend to the context
    /// block only) and gets a dense matmul path.
    Prefix(usize),
    /// Arbitrary per-row permission sets; rows iterate their allowed targets
    /// in ascending order.
    General(BitMatrix),
}

enum Node {
    Leaf,
    Affine { x: usize, w: usize, b: usize },
    Add { a: usize, b: usize },
    Gelu { x: usize, tanh: Vec<f64> },
    LayerNorm { x: usize, gain: usize, shift: usize, xhat: Tensor, inv_std: Vec<f64> },
    SoftmaxRows { x: usize },
    MaskedAttention { q: usize, k: usize, v: usize, heads: usize, pattern: AttnPattern, probs: Vec<Tensor> },
    SliceCols { x: usize, start: usize, end: usize },
    SliceRows { x: usize, start: usize, end: usize },
    EmbedRows { table: usize, ids: Vec<u32> },
    CrossEntropy { probs: usize, labels: Vec<u32> },
    DotConst { x: usize, weights: Tensor },
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
pub struct Gradients {
    by_val: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.by_val[v.0].as_ref()
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor> {
        self.by_val[v.0].take()
    }
}

#[derive(Default)]
pub struct Tape {
    vals: Vec<Tensor>,
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn leaf(&mut self, t: Tensor) -> Var {
        self.push(t, Node::Leaf)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.vals[v.0]
    }

    fn push(&mut self, t: Tensor, node: Node) -> Var {
        self.vals.push(t);
        self.nodes.push(node);
        Var(self.vals.len() - 1)
    }

    /// `x [n,p] @ w [p,q] + b [q]`.
    pub fn affine(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (_, p) = self.vals[x.0].dims2();
        let (pw, q) = self.vals[w.0].dims2();
        if p != pw || self.vals[b.0].shape() != [q] {
            return Err(contract(format!(
                "affine shapes do not conform: x {:?}, w {:?}, b {:?}",
                self.vals[x.0].shape(),
                self.vals[w.0].shape(),
                self.vals[b.0].shape()
            )));
        }
        let mut out = linalg::matmul(&self.vals[x.0], &self.vals[w.0]);
        let bias = self.vals[b.0].data().to_vec();
        for i in 0..out.dims2().0 {
            for (slot, bv) in out.row_mut(i).iter_mut().zip(&bias) {
                *slot += bv;
            }
        }
        out.check_finite("affine")?;
        Ok(self.push(out, Node::Affine { x: x.0, w: w.0, b: b.0 }))
    }

    /// Elementwise sum of two same-shape tensors.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.vals[a.0].same_shape(&self.vals[b.0])?;
        let mut out = self.vals[a.0].clone();
        linalg::add_assign(&mut out, &self.vals[b.0]);
        out.check_finite("add")?;
        Ok(self.push(out, Node::Add { a: a.0, b: b.0 }))
    }

    /// GELU, tanh formulation.
    pub fn gelu(&mut self, x: Var) -> Result<Var> {
        let xs = self.vals[x.0].data();
        let mut tanh = Vec::with_capacity(xs.len());
        let mut out = Vec::with_capacity(xs.len());
        for &v in xs {
            let t = (GELU_C * (v + 0.044715 * v * v * v)).tanh();
            tanh.push(t);
            out.push(0.5 * v * (1.0 + t));
        }
        let out = Tensor::new(self.vals[x.0].shape().to_vec(), out);
        out.check_finite("gelu")?;
        Ok(self.push(out, Node::Gelu { x: x.0, tanh }))
    }

    /// Row-stable softmax: per-row max subtraction, rows sum to one.
    pub fn softmax_rows(&mut self, x: Var) -> Result<Var> {
        self.vals[x.0].check_finite("softmax_rows input")?;
        let out = softmax_rows_value(&self.vals[x.0]);
        out.check_finite("softmax_rows")?;
        Ok(self.push(out, Node::SoftmaxRows { x: x.0 }))
    }

    /// Per-row normalization with epsilon 1e-5 inside the square root,
    /// then elementwise gain and shift.
    pub fn layer_norm(&mut self, x: Var, gain: Var, shift: Var) -> Result<Var> {
        let (n, d) = self.vals[x.0].dims2();
        if d < 2 {
            return Err(contract("layer_norm requires d >= 2"));
        }
        if self.vals[gain.0].shape() != [d] || self.vals[shift.0].shape() != [d] {
            return Err(contract("layer_norm gain/shift must have shape [d]"));
        }
        let mut xhat = Tensor::zeros(&[n, d]);
        let mut inv_std = vec![0.0; n];
        let mut out = Tensor::zeros(&[n, d]);
        for i in 0..n {
            let row = self.vals[x.0].row(i);
            let mean = row.iter().sum::<f64>() / d as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
            let is = 1.0 / (var + LN_EPS).sqrt();
            inv_std[i] = is;
            let g = self.vals[gain.0].data();
            let s = self.vals[shift.0].data();
            for j in 0..d {
                let h = (row[j] - mean) * is;
                xhat.row_mut(i)[j] = h;
                out.row_mut(i)[j] = h * g[j] + s[j];
            }
        }
        out.check_finite("layer_norm")?;
        Ok(self.push(out, Node::LayerNorm { x: x.0, gain: gain.0, shift: shift.0, xhat, inv_std }))
    }

    /// Multi-head scaled dot-product attention under a permission mask.
    ///
    /// `mask[i][j] = 1` lets row `i` attend to row `j`. Disallowed targets are
    /// never touched: the softmax and the value sum run over the allowed set
    /// only, so an output row is bitwise independent of masked-out rows.
    pub fn masked_attention(&mut self, q: Var, k: Var, v: Var, mask: &BitMatrix, heads: usize) -> Result<Var> {
        let (l, d) = self.vals[q.0].dims2();
        if self.vals[k.0].shape() != [l, d] || self.vals[v.0].shape() != [l, d] {
            return Err(contract("masked_attention q/k/v must share shape [L,d]"));
        }
        if mask.n_rows() != l {
            return Err(contract("mask rows must equal sequence length"));
        }
        if heads == 0 || d % heads != 0 {
            return Err(contract(format!("d={d} must be divisible by heads={heads}")));
        }
        for i in 0..l {
            if mask.allowed(i).is_empty() {
                return Err(contract(format!("attention row {i} has no allowed targets")));
            }
        }
        let pattern = match mask.uniform_prefix() {
            Some(c) => AttnPattern::Prefix(c),
            None => AttnPattern::General(mask.clone()),
        };
        let dh = d / heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let mut out = Tensor::zeros(&[l, d]);
        let mut probs = Vec::with_capacity(heads);
        for h in 0..heads {
            let qh = slice_cols_value(&self.vals[q.0], h * dh, (h + 1) * dh);
            match &pattern {
                AttnPattern::Prefix(c) => {
                    let kh = head_rows(&self.vals[k.0], h * dh, dh, *c);
                    let vh = head_rows(&self.vals[v.0], h * dh, dh, *c);
                    let mut scores = linalg::matmul_transb(&qh, &kh);
                    for s in scores.data_mut() {
                        *s *= scale;
                    }
                    let p = softmax_rows_value(&scores);
                    let oh = linalg::matmul(&p, &vh);
                    write_head(&mut out, &oh, h * dh);
                    probs.push(p);
                }
                AttnPattern::General(m) => {
                    let kh = slice_cols_value(&self.vals[k.0], h * dh, (h + 1) * dh);
                    let vh = slice_cols_value(&self.vals[v.0], h * dh, (h + 1) * dh);
                    let mut p = Tensor::zeros(&[l, l]);
                    for i in 0..l {
                        let allowed = m.allowed(i);
                        let mut logits: Vec<f64> =
                            allowed.iter().map(|&j| scale * dot(qh.row(i), kh.row(j))).collect();
                        softmax_in_place(&mut logits);
                        for (t, &j) in allowed.iter().enumerate() {
                            p.row_mut(i)[j] = logits[t];
                        }
                        let orow = &mut out.row_mut(i)[h * dh..(h + 1) * dh];
                        for (t, &j) in allowed.iter().enumerate() {
                            linalg::add_scaled(orow, vh.row(j), logits[t]);
                        }
                    }
                    probs.push(p);
                }
            }
        }
        out.check_finite("masked_attention")?;
        Ok(self.push(out, Node::MaskedAttention { q: q.0, k: k.0, v: v.0, heads, pattern, probs }))
    }

    /// Columns `[start, end)` of a rank-2 tensor.
    pub fn slice_cols(&mut self, x: Var, start: usize, end: usize) -> Result<Var> {
        let (_, c) = self.vals[x.0].dims2();
        if start >= end || end > c {
            return Err(contract(format!("slice [{start},{end}) out of {c} columns")));
        }
        let out = slice_cols_value(&self.vals[x.0], start, end);
        Ok(self.push(out, Node::SliceCols { x: x.0, start, end }))
    }

    /// Rows `[start, end)` of a rank-2 tensor.
    pub fn slice_rows(&mut self, x: Var, start: usize, end: usize) -> Result<Var> {
        let (n, _) = self.vals[x.0].dims2();
        if start >= end || end > n {
            return Err(contract(format!("slice [{start},{end}) out of {n} rows")));
        }
        let ids: Vec<usize> = (start..end).collect();
        let out = self.vals[x.0].gather_rows(&ids);
        Ok(self.push(out, Node::SliceRows { x: x.0, start, end }))
    }

    /// Row lookup: `out[i] = table[ids[i]]`.
    pub fn embed_rows(&mut self, table: Var, ids: &[u32]) -> Result<Var> {
        let (r, _) = self.vals[table.0].dims2();
        if let Some(&bad) = ids.iter().find(|&&i| i as usize >= r) {
            return Err(contract(format!("embedding id {bad} out of {r} rows")));
        }
        let idx: Vec<usize> = ids.iter().map(|&i| i as usize).collect();
        let out = self.vals[table.0].gather_rows(&idx);
        Ok(self.push(out, Node::EmbedRows { table: table.0, ids: ids.to_vec() }))
    }

    /// Mean over rows of `-ln(probs[i, labels[i]])`, probabilities clamped
    /// at 1e-12 before the log.
    pub fn cross_entropy(&mut self, probs: Var, labels: &[u32]) -> Result<Var> {
        let (n, c) = self.vals[probs.0].dims2();
        if labels.len() != n {
            return Err(contract("cross_entropy needs one label per row"));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y as usize >= c) {
            return Err(contract(format!("label {bad} out of range [0,{c})")));
        }
        let mut total = 0.0;
        for (i, &y) in labels.iter().enumerate() {
            let p = self.vals[probs.0].at2(i, y as usize).max(CE_CLAMP);
            total -= p.ln();
        }
        let out = Tensor::scalar(total / n as f64);
        out.check_finite("cross_entropy")?;
        Ok(self.push(out, Node::CrossEntropy { probs: probs.0, labels: labels.to_vec() }))
    }

    /// Fixed linear functional onto a scalar: `sum(x .* weights)`. The
    /// weights are constants, not tape values.
    pub fn dot_const(&mut self, x: Var, weights: Tensor) -> Result<Var> {
        self.vals[x.0].same_shape(&weights)?;
        let out = Tensor::scalar(dot(self.vals[x.0].data(), weights.data()));
        out.check_finite("dot_const")?;
        Ok(self.push(out, Node::DotConst { x: x.0, weights }))
    }

    /// Reverse sweep from a scalar loss. Nodes are replayed in strict reverse
    /// creation order (reverse topological order by construction).
    pub fn backward(&self, loss: Var) -> Gradients {
        assert_eq!(self.vals[loss.0].numel(), 1, "backward expects a scalar loss");
        let mut g: Vec<Option<Tensor>> = vec![None; self.vals.len()];
        g[loss.0] = Some(Tensor::new(self.vals[loss.0].shape().to_vec(), vec![1.0]));

        for id in (0..self.nodes.len()).rev() {
            let dy = match &g[id] {
                Some(t) => t.clone(),
                None => continue,
            };
            match &self.nodes[id] {
                Node::Leaf => {}
                Node::Affine { x, w, b } => {
                    let dx = linalg::matmul_transb(&dy, &self.vals[*w]);
                    let dw = linalg::matmul_transa(&self.vals[*x], &dy);
                    let (n, q) = dy.dims2();
                    let mut db = Tensor::zeros(&[q]);
                    for i in 0..n {
                        linalg::add_scaled(db.data_mut(), dy.row(i), 1.0);
                    }
                    accumulate(&mut g, *x, dx);
                    accumulate(&mut g, *w, dw);
                    accumulate(&mut g, *b, db);
                }
                Node::Add { a, b } => {
                    accumulate(&mut g, *a, dy.clone());
                    accumulate(&mut g, *b, dy);
                }
                Node::Gelu { x, tanh } => {
                    let mut dx = dy;
                    for ((gv, &xv), &t) in
                        dx.data_mut().iter_mut().zip(self.vals[*x].data()).zip(tanh)
                    {
                        let slope = 0.5 * (1.0 + t)
                            + 0.5 * xv * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * 0.044715 * xv * xv);
                        *gv *= slope;
                    }
                    accumulate(&mut g, *x, dx);
                }
                Node::LayerNorm { x, gain, shift, xhat, inv_std } => {
                    let (n, d) = xhat.dims2();
                    let gv = self.vals[*gain].data();
                    let mut dx = Tensor::zeros(&[n, d]);
                    let mut dgain = Tensor::zeros(&[d]);
                    let mut dshift = Tensor::zeros(&[d]);
                    for i in 0..n {
                        let dyr = dy.row(i);
                        let xh = xhat.row(i);
                        let mut sum_dxhat = 0.0;
                        let mut sum_dxhat_xhat = 0.0;
                        for j in 0..d {
                            let dxh = dyr[j] * gv[j];
                            sum_dxhat += dxh;
                            sum_dxhat_xhat += dxh * xh[j];
                        }
                        let m1 = sum_dxhat / d as f64;
                        let m2 = sum_dxhat_xhat / d as f64;
                        for j in 0..d {
                            let dxh = dyr[j] * gv[j];
                            dx.row_mut(i)[j] = inv_std[i] * (dxh - m1 - xh[j] * m2);
                        }
                        for j in 0..d {
                            dgain.data_mut()[j] += dyr[j] * xh[j];
                            dshift.data_mut()[j] += dyr[j];
                        }
                    }
                    accumulate(&mut g, *x, dx);
                    accumulate(&mut g, *gain, dgain);
                    accumulate(&mut g, *shift, dshift);
                }
                Node::SoftmaxRows { x } => {
                    let p = &self.vals[id];
                    accumulate(&mut g, *x, softmax_rows_backward(p, &dy));
                }
                Node::MaskedAttention { q, k, v, heads, pattern, probs } => {
                    let (l, d) = self.vals[*q].dims2();
                    let dh = d / heads;
                    let scale = 1.0 / (dh as f64).sqrt();
                    let mut dq = Tensor::zeros(&[l, d]);
                    let mut dk = Tensor::zeros(&[l, d]);
                    let mut dv = Tensor::zeros(&[l, d]);
                    for h in 0..*heads {
                        let dyh = slice_cols_value(&dy, h * dh, (h + 1) * dh);
                        let p = &probs[h];
                        match pattern {
                            AttnPattern::Prefix(c) => {
                                let qh = slice_cols_value(&self.vals[*q], h * dh, (h + 1) * dh);
                                let kh = head_rows(&self.vals[*k], h * dh, dh, *c);
                                let vh = head_rows(&self.vals[*v], h * dh, dh, *c);
                                let dp = linalg::matmul_transb(&dyh, &vh);
                                let dvh = linalg::matmul_transa(p, &dyh);
                                let mut dscores = softmax_rows_backward(p, &dp);
                                for s in dscores.data_mut() {
                                    *s *= scale;
                                }
                                let dqh = linalg::matmul(&dscores, &kh);
                                let dkh = linalg::matmul_transa(&dscores, &qh);
                                add_head(&mut dq, &dqh, h * dh, 0);
                                add_head(&mut dk, &dkh, h * dh, 0);
                                add_head(&mut dv, &dvh, h * dh, 0);
                            }
                            AttnPattern::General(m) => {
                                let qh = slice_cols_value(&self.vals[*q], h * dh, (h + 1) * dh);
                                let kh = slice_cols_value(&self.vals[*k], h * dh, (h + 1) * dh);
                                let vh = slice_cols_value(&self.vals[*v], h * dh, (h + 1) * dh);
                                for i in 0..l {
                                    let allowed = m.allowed(i);
                                    let dyr = dyh.row(i);
                                    // dv and dp over the allowed set only
                                    let mut dp = vec![0.0; allowed.len()];
                                    for (t, &j) in allowed.iter().enumerate() {
                                        let pij = p.at2(i, j);
                                        dp[t] = dot(dyr, vh.row(j));
                                        linalg::add_scaled(
                                            &mut dv.row_mut(j)[h * dh..(h + 1) * dh],
                                            dyr,
                                            pij,
                                        );
                                    }
                                    let dotp: f64 = allowed
                                        .iter()
                                        .enumerate()
                                        .map(|(t, &j)| dp[t] * p.at2(i, j))
                                        .sum();
                                    for (t, &j) in allowed.iter().enumerate() {
                                        let ds = p.at2(i, j) * (dp[t] - dotp) * scale;
                                        linalg::add_scaled(
                                            &mut dq.row_mut(i)[h * dh..(h + 1) * dh],
                                            kh.row(j),
                                            ds,
                                        );
                                        linalg::add_scaled(
                                            &mut dk.row_mut(j)[h * dh..(h + 1) * dh],
                                            qh.row(i),
                                            ds,
                                        );
                                    }
                                }
                            }
                        }
                    }
                    accumulate(&mut g, *q, dq);
                    accumulate(&mut g, *k, dk);
                    accumulate(&mut g, *v, dv);
                }
                Node::SliceCols { x, start, end } => {
                    let (n, c) = self.vals[*x].dims2();
                    let mut dx = Tensor::zeros(&[n, c]);
                    for i in 0..n {
                        dx.row_mut(i)[*start..*end].copy_from_slice(dy.row(i));
                    }
                    accumulate(&mut g, *x, dx);
                }
                Node::SliceRows { x, start, end } => {
                    let (n, c) = self.vals[*x].dims2();
                    let mut dx = Tensor::zeros(&[n, c]);
                    for i in *start..*end {
                        dx.row_mut(i).copy_from_slice(dy.row(i - start));
                    }
                    accumulate(&mut g, *x, dx);
                }
                Node::EmbedRows { table, ids } => {
                    let (r, d) = self.vals[*table].dims2();
                    let mut dt = Tensor::zeros(&[r, d]);
                    for (i, &id_) in ids.iter().enumerate() {
                        linalg::add_scaled(dt.row_mut(id_ as usize), dy.row(i), 1.0);
                    }
                    accumulate(&mut g, *table, dt);
                }
                Node::CrossEntropy { probs, labels } => {
                    let go = dy.item();
                    let (n, c) = self.vals[*probs].dims2();
                    let mut dp = Tensor::zeros(&[n, c]);
                    for (i, &y) in labels.iter().enumerate() {
                        let p = self.vals[*probs].at2(i, y as usize);
                        if p > CE_CLAMP {
                            dp.row_mut(i)[y as usize] = -go / (n as f64 * p);
                        }
                    }
                    accumulate(&mut g, *probs, dp);
                }
                Node::DotConst { x, weights } => {
                    let go = dy.item();
                    let mut dx = weights.clone();
                    for v in dx.data_mut() {
                        *v *= go;
                    }
                    accumulate(&mut g, *x, dx);
                }
            }
        }
        Gradients { by_val: g }
    }
}

const LN_EPS: f64 = 1e-5;
const CE_CLAMP: f64 = 1e-12;

fn accumulate(g: &mut [Option<Tensor>], target: usize, delta: Tensor) {
    match &mut g[target] {
        Some(t) => linalg::add_assign(t, &delta),
        slot => *slot = Some(delta),
    }
}

const GELU_C: f64 = 0.7978845608028654; // sqrt(2/pi)

fn softmax_in_place(row: &mut [f64]) {
    let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - m).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

pub(crate) fn softmax_rows_value(x: &Tensor) -> Tensor {
    let (n, _) = x.dims2();
    let mut out = x.clone();
    for i in 0..n {
        softmax_in_place(out.row_mut(i));
    }
    out
}

/// dx = p .* (dy - rowsum(dy .* p))
fn softmax_rows_backward(p: &Tensor, dy: &Tensor) -> Tensor {
    let (n, c) = p.dims2();
    let mut dx = Tensor::zeros(&[n, c]);
    for i in 0..n {
        let pr = p.row(i);
        let dyr = dy.row(i);
        let s = dot(pr, dyr);
        for j in 0..c {
            dx.row_mut(i)[j] = pr[j] * (dyr[j] - s);
        }
    }
    dx
}

fn slice_cols_value(x: &Tensor, start: usize, end: usize) -> Tensor {
    let (n, _) = x.dims2();
    let mut out = Tensor::zeros(&[n, end - start]);
    for i in 0..n {
        out.row_mut(i).copy_from_slice(&x.row(i)[start..end]);
    }
    out
}

/// First `rows` rows of the head columns `[col0, col0+dh)`.
fn head_rows(x: &Tensor, col0: usize, dh: usize, rows: usize) -> Tensor {
    let mut out = Tensor::zeros(&[rows, dh]);
    for i in 0..rows {
        out.row_mut(i).copy_from_slice(&x.row(i)[col0..col0 + dh]);
    }
    out
}

fn write_head(out: &mut Tensor, oh: &Tensor, col0: usize) {
    let (n, dh) = oh.dims2();
    for i in 0..n {
        out.row_mut(i)[col0..col0 + dh].copy_from_slice(oh.row(i));
    }
}

fn add_head(out: &mut Tensor, delta: &Tensor, col0: usize, row0: usize) {
    let (n, dh) = delta.dims2();
    for i in 0..n {
        linalg::add_scaled(&mut out.row_mut(row0 + i)[col0..col0 + dh], delta.row(i), 1.0);
    }
}

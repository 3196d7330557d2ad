//! Reverse-mode differentiation on a Wengert tape.
//!
//! The tape records a closed set of primitives during the forward pass and
//! replays them in exact reverse order to accumulate adjoints. The set is
//! intentionally minimal: model variants compose these ops rather than adding
//! new ones, which keeps the finite-difference check surface exhaustive.

use crate::error::{Error, Result};
use crate::tensor::{self, shape_err, Tensor};

/// Handle to a node on the tape.
pub type Var = usize;

#[derive(Clone, Debug)]
enum Op {
    /// Leaf value: a parameter, constant, or any untraced output.
    Leaf,
    /// Forward identity; blocks adjoint flow to its input.
    StopGradient,
    Matmul { a: Var, b: Var },
    /// A @ B^T with B given row-major as [n, k].
    MatmulNT { a: Var, b: Var },
    Add { a: Var, b: Var },
    /// [m,n] + broadcast row [1,n].
    AddBias { a: Var, bias: Var },
    Mul { a: Var, b: Var },
    Scale { a: Var, c: f64 },
    AddConst { a: Var },
    LeakyRelu { a: Var, slope: f64 },
    Sigmoid { a: Var },
    Log { a: Var },
    Exp { a: Var },
    ClampMin { a: Var, c: f64 },
    L2NormalizeRows { a: Var },
    SoftmaxRows { a: Var },
    /// Row-wise sum: [m,n] -> [m,1].
    RowSum { a: Var },
    /// Sum of all entries: -> [1,1].
    SumAll { a: Var },
    /// Column-wise concatenation of same-row-count matrices.
    ConcatCols { parts: Vec<Var> },
    /// Row gather from an embedding table: table[V,d], ids[B] -> [B,d].
    EmbedGather { table: Var, ids: Vec<usize> },
    /// Mean of gathered rows per sample; empty lists pool to the zero row.
    EmbedMeanPool { table: Var, lists: Vec<Vec<usize>> },
    /// Per-sample softmax attention over gathered history rows, scored
    /// against a query row by scaled dot product.
    AttentionPool {
        table: Var,
        query: Var,
        lists: Vec<Vec<usize>>,
    },
}

struct Node {
    op: Op,
    value: Tensor,
}

/// Single-writer tape: build the graph through the methods below, then call
/// [`Tape::backward`] on a scalar node.
pub struct Tape {
    nodes: Vec<Node>,
    recording: bool,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape {
            nodes: Vec::new(),
            recording: true,
        }
    }

    /// A tape that evaluates forward values but records every output as a
    /// leaf, so nothing can be differentiated. Used for gradient-free
    /// evaluation passes.
    pub fn no_grad() -> Self {
        Tape {
            nodes: Vec::new(),
            recording: false,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v].value
    }

    fn push(&mut self, op: Op, value: Tensor) -> Var {
        let op = if self.recording { op } else { Op::Leaf };
        self.nodes.push(Node { op, value });
        self.nodes.len() - 1
    }

    /// Register a leaf. Data is snapshotted onto the tape; later mutation of
    /// the source cannot affect this graph.
    pub fn leaf(&mut self, t: &Tensor) -> Var {
        self.nodes.push(Node {
            op: Op::Leaf,
            value: t.clone(),
        });
        self.nodes.len() - 1
    }

    pub fn leaf_owned(&mut self, t: Tensor) -> Var {
        self.nodes.push(Node {
            op: Op::Leaf,
            value: t,
        });
        self.nodes.len() - 1
    }

    pub fn scalar(&mut self, v: f64) -> Var {
        self.leaf_owned(Tensor::scalar(v))
    }

    pub fn stop_gradient(&mut self, a: Var) -> Var {
        let value = self.nodes[a].value.clone();
        self.push(Op::StopGradient, value)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = tensor::matmul(&self.nodes[a].value, &self.nodes[b].value)?;
        Ok(self.push(Op::Matmul { a, b }, value))
    }

    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = tensor::matmul_nt(&self.nodes[a].value, &self.nodes[b].value)?;
        Ok(self.push(Op::MatmulNT { a, b }, value))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (&self.nodes[a].value, &self.nodes[b].value);
        if ta.shape != tb.shape {
            return Err(shape_err("add", &ta.shape, &tb.shape));
        }
        let data = ta.data.iter().zip(&tb.data).map(|(x, y)| x + y).collect();
        let value = Tensor::new(ta.shape.clone(), data);
        Ok(self.push(Op::Add { a, b }, value))
    }

    pub fn add_bias(&mut self, a: Var, bias: Var) -> Result<Var> {
        let (ta, tb) = (&self.nodes[a].value, &self.nodes[bias].value);
        if tb.rows() != 1 || ta.cols() != tb.cols() {
            return Err(shape_err("add_bias", &ta.shape, &tb.shape));
        }
        let n = ta.cols();
        let mut data = ta.data.clone();
        for row in data.chunks_mut(n) {
            for (x, b) in row.iter_mut().zip(&tb.data) {
                *x += b;
            }
        }
        let value = Tensor::new(ta.shape.clone(), data);
        Ok(self.push(Op::AddBias { a, bias }, value))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (&self.nodes[a].value, &self.nodes[b].value);
        if ta.shape != tb.shape {
            return Err(shape_err("mul", &ta.shape, &tb.shape));
        }
        let data = ta.data.iter().zip(&tb.data).map(|(x, y)| x * y).collect();
        let value = Tensor::new(ta.shape.clone(), data);
        Ok(self.push(Op::Mul { a, b }, value))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let ta = &self.nodes[a].value;
        let value = Tensor::new(ta.shape.clone(), ta.data.iter().map(|x| x * c).collect());
        self.push(Op::Scale { a, c }, value)
    }

    pub fn add_const(&mut self, a: Var, c: f64) -> Var {
        let ta = &self.nodes[a].value;
        let value = Tensor::new(ta.shape.clone(), ta.data.iter().map(|x| x + c).collect());
        self.push(Op::AddConst { a }, value)
    }

    /// a - b, composed from the primitive set.
    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let nb = self.scale(b, -1.0);
        self.add(a, nb)
    }

    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Var {
        let ta = &self.nodes[a].value;
        let data = ta
            .data
            .iter()
            .map(|&x| if x >= 0.0 { x } else { slope * x })
            .collect();
        let value = Tensor::new(ta.shape.clone(), data);
        self.push(Op::LeakyRelu { a, slope }, value)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let ta = &self.nodes[a].value;
        let data = ta
            .data
            .iter()
            .map(|&x| {
                if x >= 0.0 {
                    1.0 / (1.0 + (-x).exp())
                } else {
                    let e = x.exp();
                    e / (1.0 + e)
                }
            })
            .collect();
        let value = Tensor::new(ta.shape.clone(), data);
        self.push(Op::Sigmoid { a }, value)
    }

    pub fn log(&mut self, a: Var) -> Var {
        let ta = &self.nodes[a].value;
        let value = Tensor::new(ta.shape.clone(), ta.data.iter().map(|x| x.ln()).collect());
        self.push(Op::Log { a }, value)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let ta = &self.nodes[a].value;
        let value = Tensor::new(ta.shape.clone(), ta.data.iter().map(|x| x.exp()).collect());
        self.push(Op::Exp { a }, value)
    }

    pub fn clamp_min(&mut self, a: Var, c: f64) -> Var {
        let ta = &self.nodes[a].value;
        let value = Tensor::new(ta.shape.clone(), ta.data.iter().map(|x| x.max(c)).collect());
        self.push(Op::ClampMin { a, c }, value)
    }

    pub fn l2_normalize_rows(&mut self, a: Var) -> Var {
        let value = tensor::l2_normalize_rows(&self.nodes[a].value);
        self.push(Op::L2NormalizeRows { a }, value)
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let value = tensor::softmax_rows(&self.nodes[a].value);
        self.push(Op::SoftmaxRows { a }, value)
    }

    pub fn row_sum(&mut self, a: Var) -> Var {
        let ta = &self.nodes[a].value;
        let (m, n) = (ta.rows(), ta.cols());
        let data = (0..m).map(|i| ta.data[i * n..(i + 1) * n].iter().sum()).collect();
        self.push(Op::RowSum { a }, Tensor::matrix(m, 1, data))
    }

    pub fn sum_all(&mut self, a: Var) -> Var {
        let s: f64 = self.nodes[a].value.data.iter().sum();
        self.push(Op::SumAll { a }, Tensor::scalar(s))
    }

    /// Mean over all entries, composed from sum + scale.
    pub fn mean_all(&mut self, a: Var) -> Var {
        let n = self.nodes[a].value.numel();
        let s = self.sum_all(a);
        self.scale(s, 1.0 / n as f64)
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        assert!(!parts.is_empty(), "concat_cols needs at least one part");
        let m = self.nodes[parts[0]].value.rows();
        let mut total = 0;
        for &p in parts {
            let t = &self.nodes[p].value;
            if t.rows() != m {
                return Err(shape_err(
                    "concat_cols",
                    &self.nodes[parts[0]].value.shape,
                    &t.shape,
                ));
            }
            total += t.cols();
        }
        let mut data = vec![0.0; m * total];
        let mut offset = 0;
        for &p in parts {
            let t = &self.nodes[p].value;
            let n = t.cols();
            for i in 0..m {
                data[i * total + offset..i * total + offset + n].copy_from_slice(t.row(i));
            }
            offset += n;
        }
        let value = Tensor::matrix(m, total, data);
        Ok(self.push(
            Op::ConcatCols {
                parts: parts.to_vec(),
            },
            value,
        ))
    }

    pub fn embed_gather(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let t = &self.nodes[table].value;
        let (v, d) = (t.rows(), t.cols());
        let mut data = Vec::with_capacity(ids.len() * d);
        for &id in ids {
            if id >= v {
                return Err(Error::IndexOutOfRange {
                    op: "embed_gather",
                    index: id,
                    bound: v,
                });
            }
            data.extend_from_slice(t.row(id));
        }
        let value = Tensor::matrix(ids.len(), d, data);
        Ok(self.push(
            Op::EmbedGather {
                table,
                ids: ids.to_vec(),
            },
            value,
        ))
    }

    pub fn embed_mean_pool(&mut self, table: Var, lists: &[Vec<usize>]) -> Result<Var> {
        let t = &self.nodes[table].value;
        let (v, d) = (t.rows(), t.cols());
        let mut data = vec![0.0; lists.len() * d];
        for (i, list) in lists.iter().enumerate() {
            if list.is_empty() {
                continue;
            }
            let out = &mut data[i * d..(i + 1) * d];
            for &id in list {
                if id >= v {
                    return Err(Error::IndexOutOfRange {
                        op: "embed_mean_pool",
                        index: id,
                        bound: v,
                    });
                }
                let row = &t.data[id * d..(id + 1) * d];
                for (o, &x) in out.iter_mut().zip(row) {
                    *o += x;
                }
            }
            let inv = 1.0 / list.len() as f64;
            for o in out.iter_mut() {
                *o *= inv;
            }
        }
        let value = Tensor::matrix(lists.len(), d, data);
        Ok(self.push(
            Op::EmbedMeanPool {
                table,
                lists: lists.to_vec(),
            },
            value,
        ))
    }

    /// Softmax attention over each sample's history rows. `query` is a
    /// [B, d] node (typically a projected candidate embedding); scores are
    /// `history_row . query / sqrt(d)`. Empty histories pool to zero,
    /// matching the mean-pool convention.
    pub fn attention_pool(
        &mut self,
        table: Var,
        query: Var,
        lists: &[Vec<usize>],
    ) -> Result<Var> {
        let t = &self.nodes[table].value;
        let q = &self.nodes[query].value;
        let (v, d) = (t.rows(), t.cols());
        if q.cols() != d || q.rows() != lists.len() {
            return Err(shape_err("attention_pool", &q.shape, &t.shape));
        }
        let mut data = vec![0.0; lists.len() * d];
        for (i, list) in lists.iter().enumerate() {
            if list.is_empty() {
                continue;
            }
            for &id in list {
                if id >= v {
                    return Err(Error::IndexOutOfRange {
                        op: "attention_pool",
                        index: id,
                        bound: v,
                    });
                }
            }
            let weights = attention_weights(t, q.row(i), list, d);
            let out = &mut data[i * d..(i + 1) * d];
            for (&id, &w) in list.iter().zip(&weights) {
                let row = &t.data[id * d..(id + 1) * d];
                for (o, &x) in out.iter_mut().zip(row) {
                    *o += w * x;
                }
            }
        }
        let value = Tensor::matrix(lists.len(), d, data);
        Ok(self.push(
            Op::AttentionPool {
                table,
                query,
                lists: lists.to_vec(),
            },
            value,
        ))
    }

    /// Reverse pass from a scalar loss node. Returns per-node adjoints;
    /// query them through [`Gradients`]. Replaying the same tape yields
    /// bitwise-identical results.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let loss_t = &self.nodes[loss].value;
        if !loss_t.is_scalar() {
            return Err(Error::NonScalarLoss {
                op: "backward",
                shape: loss_t.shape.clone(),
            });
        }
        let mut adj: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        adj[loss] = Some(vec![1.0]);

        for idx in (0..=loss).rev() {
            let Some(up) = adj[idx].take() else { continue };
            self.backward_node(idx, &up, &mut adj);
            adj[idx] = Some(up);
        }
        Ok(Gradients {
            shapes: self.nodes.iter().map(|n| n.value.shape.clone()).collect(),
            adj,
        })
    }

    fn accumulate(adj: &mut [Option<Vec<f64>>], var: Var, grad: impl IntoIterator<Item = f64>) {
        match &mut adj[var] {
            Some(existing) => {
                for (e, g) in existing.iter_mut().zip(grad) {
                    *e += g;
                }
            }
            None => {
                adj[var] = Some(grad.into_iter().collect());
            }
        }
    }

    fn accumulate_at(adj: &mut [Option<Vec<f64>>], var: Var, numel: usize, f: impl FnOnce(&mut [f64])) {
        if adj[var].is_none() {
            adj[var] = Some(vec![0.0; numel]);
        }
        f(adj[var].as_mut().unwrap());
    }

    fn backward_node(&self, idx: usize, up: &[f64], adj: &mut [Option<Vec<f64>>]) {
        match &self.nodes[idx].op {
            Op::Leaf | Op::StopGradient => {}
            Op::Matmul { a, b } => {
                let up_t = Tensor::new(self.nodes[idx].value.shape.clone(), up.to_vec());
                let da = tensor::matmul_nt(&up_t, &self.nodes[*b].value).unwrap();
                let db = tensor::matmul_tn(&self.nodes[*a].value, &up_t).unwrap();
                Self::accumulate(adj, *a, da.data);
                Self::accumulate(adj, *b, db.data);
            }
            Op::MatmulNT { a, b } => {
                let up_t = Tensor::new(self.nodes[idx].value.shape.clone(), up.to_vec());
                let da = tensor::matmul(&up_t, &self.nodes[*b].value).unwrap();
                let db = tensor::matmul_tn(&up_t, &self.nodes[*a].value).unwrap();
                Self::accumulate(adj, *a, da.data);
                Self::accumulate(adj, *b, db.data);
            }
            Op::Add { a, b } => {
                Self::accumulate(adj, *a, up.iter().copied());
                Self::accumulate(adj, *b, up.iter().copied());
            }
            Op::AddBias { a, bias } => {
                Self::accumulate(adj, *a, up.iter().copied());
                let n = self.nodes[*bias].value.cols();
                let mut db = vec![0.0; n];
                for row in up.chunks(n) {
                    for (d, &u) in db.iter_mut().zip(row) {
                        *d += u;
                    }
                }
                Self::accumulate(adj, *bias, db);
            }
            Op::Mul { a, b } => {
                let (ta, tb) = (&self.nodes[*a].value, &self.nodes[*b].value);
                Self::accumulate(adj, *a, up.iter().zip(&tb.data).map(|(u, y)| u * y));
                Self::accumulate(adj, *b, up.iter().zip(&ta.data).map(|(u, x)| u * x));
            }
            Op::Scale { a, c } => {
                Self::accumulate(adj, *a, up.iter().map(|u| u * c));
            }
            Op::AddConst { a } => {
                Self::accumulate(adj, *a, up.iter().copied());
            }
            Op::LeakyRelu { a, slope } => {
                let ta = &self.nodes[*a].value;
                Self::accumulate(
                    adj,
                    *a,
                    up.iter()
                        .zip(&ta.data)
                        .map(|(u, &x)| if x >= 0.0 { *u } else { u * slope }),
                );
            }
            Op::Sigmoid { a } => {
                let y = &self.nodes[idx].value;
                Self::accumulate(
                    adj,
                    *a,
                    up.iter().zip(&y.data).map(|(u, &y)| u * y * (1.0 - y)),
                );
            }
            Op::Log { a } => {
                let ta = &self.nodes[*a].value;
                Self::accumulate(adj, *a, up.iter().zip(&ta.data).map(|(u, &x)| u / x));
            }
            Op::Exp { a } => {
                let y = &self.nodes[idx].value;
                Self::accumulate(adj, *a, up.iter().zip(&y.data).map(|(u, &y)| u * y));
            }
            Op::ClampMin { a, c } => {
                let ta = &self.nodes[*a].value;
                Self::accumulate(
                    adj,
                    *a,
                    up.iter()
                        .zip(&ta.data)
                        .map(|(u, &x)| if x > *c { *u } else { 0.0 }),
                );
            }
            Op::L2NormalizeRows { a } => {
                let ta = &self.nodes[*a].value;
                let (m, n) = (ta.rows(), ta.cols());
                Self::accumulate_at(adj, *a, m * n, |da| {
                    for i in 0..m {
                        let x = &ta.data[i * n..(i + 1) * n];
                        let u = &up[i * n..(i + 1) * n];
                        let norm = tensor::l2_norm(x);
                        let denom = norm + tensor::NORM_GUARD;
                        if norm == 0.0 {
                            // Degenerate row: treat as a plain 1/denom scaling.
                            for (d, &ui) in da[i * n..(i + 1) * n].iter_mut().zip(u) {
                                *d += ui / denom;
                            }
                            continue;
                        }
                        let ux = tensor::dot(u, x);
                        let coef = ux / (denom * denom * norm);
                        for ((d, &ui), &xi) in
                            da[i * n..(i + 1) * n].iter_mut().zip(u).zip(x)
                        {
                            *d += ui / denom - coef * xi;
                        }
                    }
                });
            }
            Op::SoftmaxRows { a } => {
                let y = &self.nodes[idx].value;
                let (m, n) = (y.rows(), y.cols());
                Self::accumulate_at(adj, *a, m * n, |da| {
                    for i in 0..m {
                        let yr = &y.data[i * n..(i + 1) * n];
                        let u = &up[i * n..(i + 1) * n];
                        let uy = tensor::dot(u, yr);
                        for ((d, &ui), &yi) in
                            da[i * n..(i + 1) * n].iter_mut().zip(u).zip(yr)
                        {
                            *d += (ui - uy) * yi;
                        }
                    }
                });
            }
            Op::RowSum { a } => {
                let ta = &self.nodes[*a].value;
                let (m, n) = (ta.rows(), ta.cols());
                Self::accumulate_at(adj, *a, m * n, |da| {
                    for i in 0..m {
                        let u = up[i];
                        for d in da[i * n..(i + 1) * n].iter_mut() {
                            *d += u;
                        }
                    }
                });
            }
            Op::SumAll { a } => {
                let numel = self.nodes[*a].value.numel();
                let u = up[0];
                Self::accumulate(adj, *a, std::iter::repeat(u).take(numel));
            }
            Op::ConcatCols { parts } => {
                let total = self.nodes[idx].value.cols();
                let m = self.nodes[idx].value.rows();
                let mut offset = 0;
                for &p in parts {
                    let n = self.nodes[p].value.cols();
                    Self::accumulate_at(adj, p, m * n, |dp| {
                        for i in 0..m {
                            let src = &up[i * total + offset..i * total + offset + n];
                            for (d, &u) in dp[i * n..(i + 1) * n].iter_mut().zip(src) {
                                *d += u;
                            }
                        }
                    });
                    offset += n;
                }
            }
            Op::EmbedGather { table, ids } => {
                let t = &self.nodes[*table].value;
                let (v, d) = (t.rows(), t.cols());
                Self::accumulate_at(adj, *table, v * d, |dt| {
                    for (i, &id) in ids.iter().enumerate() {
                        let u = &up[i * d..(i + 1) * d];
                        for (dst, &ui) in dt[id * d..(id + 1) * d].iter_mut().zip(u) {
                            *dst += ui;
                        }
                    }
                });
            }
            Op::EmbedMeanPool { table, lists } => {
                let t = &self.nodes[*table].value;
                let (v, d) = (t.rows(), t.cols());
                Self::accumulate_at(adj, *table, v * d, |dt| {
                    for (i, list) in lists.iter().enumerate() {
                        if list.is_empty() {
                            continue;
                        }
                        let inv = 1.0 / list.len() as f64;
                        let u = &up[i * d..(i + 1) * d];
                        for &id in list {
                            for (dst, &ui) in dt[id * d..(id + 1) * d].iter_mut().zip(u) {
                                *dst += ui * inv;
                            }
                        }
                    }
                });
            }
            Op::AttentionPool {
                table,
                query,
                lists,
            } => {
                self.backward_attention(*table, *query, lists, up, adj);
            }
        }
    }

    fn backward_attention(
        &self,
        table: Var,
        query: Var,
        lists: &[Vec<usize>],
        up: &[f64],
        adj: &mut [Option<Vec<f64>>],
    ) {
        let t = &self.nodes[table].value;
        let q = &self.nodes[query].value;
        let d = t.cols();
        let v = t.rows();
        let scale = 1.0 / (d as f64).sqrt();

        let mut dt = vec![0.0; v * d];
        let mut dq = vec![0.0; q.numel()];
        for (i, list) in lists.iter().enumerate() {
            if list.is_empty() {
                continue;
            }
            let qi = q.row(i);
            let u = &up[i * d..(i + 1) * d];
            let w = attention_weights(t, qi, list, d);
            // a_l = e_l . u ; s-space adjoint ds_l = w_l (a_l - sum_m w_m a_m)
            let a: Vec<f64> = list
                .iter()
                .map(|&id| tensor::dot(&t.data[id * d..(id + 1) * d], u))
                .collect();
            let abar: f64 = w.iter().zip(&a).map(|(wi, ai)| wi * ai).sum();
            for ((&id, &wl), &al) in list.iter().zip(&w).zip(&a) {
                let ds = wl * (al - abar);
                let e = &t.data[id * d..(id + 1) * d];
                let dst = &mut dt[id * d..(id + 1) * d];
                for k in 0..d {
                    // out contribution + score contribution
                    dst[k] += wl * u[k] + ds * qi[k] * scale;
                }
                for (dqk, &ek) in dq[i * d..(i + 1) * d].iter_mut().zip(e) {
                    *dqk += ds * ek * scale;
                }
            }
        }
        Self::accumulate(adj, table, dt);
        Self::accumulate(adj, query, dq);
    }
}

fn attention_weights(table: &Tensor, query: &[f64], list: &[usize], d: usize) -> Vec<f64> {
    let scale = 1.0 / (d as f64).sqrt();
    let scores: Vec<f64> = list
        .iter()
        .map(|&id| tensor::dot(&table.data[id * d..(id + 1) * d], query) * scale)
        .collect();
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut w: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let sum: f64 = w.iter().sum();
    for wi in &mut w {
        *wi /= sum;
    }
    w
}

/// Adjoints produced by a backward pass.
#[derive(Debug)]
pub struct Gradients {
    shapes: Vec<Vec<usize>>,
    adj: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    /// Gradient tensor for a node; zeros if no adjoint reached it.
    pub fn grad(&self, v: Var) -> Tensor {
        match &self.adj[v] {
            Some(g) => Tensor::new(self.shapes[v].clone(), g.clone()),
            None => Tensor::zeros(self.shapes[v].clone()),
        }
    }

    pub fn grad_slice(&self, v: Var) -> Option<&[f64]> {
        self.adj[v].as_deref()
    }
}

//! Tape-based reverse-mode differentiation over dense row-major tensors.
//!
//! Every op appends a node; node indices are therefore already in
//! topological order and [`Tape::backward`] is a single reverse sweep.
//! Tensors are at most two-dimensional. A 1-D tensor of length `n` behaves
//! as a `[1, n]` row wherever a matrix is expected.

use std::collections::HashMap;

use crate::autograd::params::{ParamId, ParamStore};
use crate::error::{Error, Result};

/// Handle to a tensor recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Backward closure of a custom op: maps the upstream gradient of the output
/// to one gradient buffer per input (same order as the inputs).
pub type CustomBackward = Box<dyn Fn(&[f64]) -> Vec<Vec<f64>> + Send>;

enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    AddBias(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SliceRows(Var, usize),
    SliceCols(Var, usize),
    Transpose(Var),
    Reshape(Var),
    Embedding(Var, Vec<usize>),
    Softmax(Var),
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        normalized: Vec<f64>,
        inv_std: Vec<f64>,
    },
    Gelu(Var),
    Tanh(Var),
    Sigmoid(Var),
    MeanRows(Var),
    Sum(Var),
    Attention {
        q: Var,
        k: Var,
        v: Var,
        heads: usize,
        probs: Vec<f64>,
    },
    SoftCrossEntropy {
        logits: Var,
        targets: Vec<f64>,
        probs: Vec<f64>,
    },
    BceWithLogits {
        logits: Var,
        targets: Vec<f64>,
    },
    Custom(Vec<Var>, CustomBackward),
}

struct Node {
    shape: Vec<usize>,
    value: Vec<f64>,
    op: Op,
    needs_grad: bool,
    requires_grad: bool,
    grad: Option<Vec<f64>>,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    params: Vec<(Var, ParamId)>,
    bound: HashMap<ParamId, Var>,
}

fn dims(shape: &[usize]) -> (usize, usize) {
    match shape {
        [n] => (1, *n),
        [r, c] => (*r, *c),
        _ => (0, 0),
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)

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

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value[0]
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Accumulated gradient of a leaf created with `requires_grad`.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.nodes[v.0].grad.as_deref()
    }

    fn push(&mut self, shape: Vec<usize>, value: Vec<f64>, op: Op, inputs: &[Var]) -> Var {
        debug_assert_eq!(shape.iter().product::<usize>(), value.len());
        let needs_grad = inputs.iter().any(|v| self.nodes[v.0].needs_grad);
        self.nodes.push(Node {
            shape,
            value,
            op,
            needs_grad,
            requires_grad: false,
            grad: None,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, shape: &[usize], data: Vec<f64>, requires_grad: bool) -> Result<Var> {
        if shape.iter().product::<usize>() != data.len() || shape.len() > 2 || shape.is_empty() {
            return Err(Error::shape("leaf", &[shape, &[data.len()]]));
        }
        self.nodes.push(Node {
            shape: shape.to_vec(),
            value: data,
            op: Op::Leaf,
            needs_grad: requires_grad,
            requires_grad,
            grad: None,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    pub fn constant(&mut self, shape: &[usize], data: Vec<f64>) -> Result<Var> {
        self.leaf(shape, data, false)
    }

    /// Record a model parameter as a gradient-carrying leaf. A parameter is
    /// recorded once per tape; later calls return the same leaf.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        if let Some(&v) = self.bound.get(&id) {
            return v;
        }
        let p = store.get(id);
        let v = self
            .leaf(&p.shape, p.data.clone(), true)
            .expect("parameters are at most 2-D");
        self.params.push((v, id));
        self.bound.insert(id, v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = dims(self.shape(a));
        let (k2, n) = dims(self.shape(b));
        if k != k2 || self.shape(b).len() != 2 {
            return Err(Error::shape("matmul", &[self.shape(a), self.shape(b)]));
        }
        let av = self.value(a);
        let bv = self.value(b);
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let row = &mut out[i * n..(i + 1) * n];
            for p in 0..k {
                let x = av[i * k + p];
                if x == 0.0 {
                    continue;
                }
                for (o, w) in row.iter_mut().zip(&bv[p * n..(p + 1) * n]) {
                    *o += x * w;
                }
            }
        }
        Ok(self.push(vec![m, n], out, Op::MatMul(a, b), &[a, b]))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::shape("add", &[self.shape(a), self.shape(b)]));
        }
        let out = self.value(a).iter().zip(self.value(b)).map(|(x, y)| x + y).collect();
        Ok(self.push(self.shape(a).to_vec(), out, Op::Add(a, b), &[a, b]))
    }

    /// `a[.., n] + b[n]`, broadcasting `b` over the leading dimension.
    pub fn add_bias(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, n) = dims(self.shape(a));
        if self.shape(b) != [n] {
            return Err(Error::shape("add_bias", &[self.shape(a), self.shape(b)]));
        }
        let bv = self.value(b);
        let mut out = self.value(a).to_vec();
        for i in 0..m {
            add_into(&mut out[i * n..(i + 1) * n], bv);
        }
        Ok(self.push(self.shape(a).to_vec(), out, Op::AddBias(a, b), &[a, b]))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::shape("mul", &[self.shape(a), self.shape(b)]));
        }
        let out = self.value(a).iter().zip(self.value(b)).map(|(x, y)| x * y).collect();
        Ok(self.push(self.shape(a).to_vec(), out, Op::Mul(a, b), &[a, b]))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let out = self.value(a).iter().map(|x| x * s).collect();
        self.push(self.shape(a).to_vec(), out, Op::Scale(a, s), &[a])
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let shapes: Vec<&[usize]> = parts.iter().map(|v| self.shape(*v)).collect();
        let Some(first) = parts.first() else {
            return Err(Error::shape("concat_cols", &[]));
        };
        let rows = dims(self.shape(*first)).0;
        if parts.iter().any(|v| self.shape(*v).len() != 2 || dims(self.shape(*v)).0 != rows) {
            return Err(Error::shape("concat_cols", &shapes));
        }
        let total: usize = parts.iter().map(|v| dims(self.shape(*v)).1).sum();
        let mut out = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for v in parts {
                let c = dims(self.shape(*v)).1;
                out.extend_from_slice(&self.value(*v)[r * c..(r + 1) * c]);
            }
        }
        Ok(self.push(vec![rows, total], out, Op::ConcatCols(parts.to_vec()), parts))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let shapes: Vec<&[usize]> = parts.iter().map(|v| self.shape(*v)).collect();
        let Some(first) = parts.first() else {
            return Err(Error::shape("concat_rows", &[]));
        };
        let cols = dims(self.shape(*first)).1;
        if parts.iter().any(|v| self.shape(*v).len() != 2 || dims(self.shape(*v)).1 != cols) {
            return Err(Error::shape("concat_rows", &shapes));
        }
        let mut out = Vec::new();
        let mut rows = 0;
        for v in parts {
            out.extend_from_slice(self.value(*v));
            rows += dims(self.shape(*v)).0;
        }
        Ok(self.push(vec![rows, cols], out, Op::ConcatRows(parts.to_vec()), parts))
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let (m, n) = dims(self.shape(a));
        if self.shape(a).len() != 2 || start > end || end > m {
            return Err(Error::shape("slice_rows", &[self.shape(a), &[start, end]]));
        }
        let out = self.value(a)[start * n..end * n].to_vec();
        Ok(self.push(vec![end - start, n], out, Op::SliceRows(a, start), &[a]))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let (m, n) = dims(self.shape(a));
        if self.shape(a).len() != 2 || start > end || end > n {
            return Err(Error::shape("slice_cols", &[self.shape(a), &[start, end]]));
        }
        let av = self.value(a);
        let mut out = Vec::with_capacity(m * (end - start));
        for r in 0..m {
            out.extend_from_slice(&av[r * n + start..r * n + end]);
        }
        Ok(self.push(vec![m, end - start], out, Op::SliceCols(a, start), &[a]))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        if self.shape(a).len() != 2 {
            return Err(Error::shape("transpose", &[self.shape(a)]));
        }
        let (m, n) = dims(self.shape(a));
        let av = self.value(a);
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                out[j * m + i] = av[i * n + j];
            }
        }
        Ok(self.push(vec![n, m], out, Op::Transpose(a), &[a]))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        if shape.iter().product::<usize>() != self.value(a).len() || shape.is_empty() || shape.len() > 2 {
            return Err(Error::shape("reshape", &[self.shape(a), shape]));
        }
        let out = self.value(a).to_vec();
        Ok(self.push(shape.to_vec(), out, Op::Reshape(a), &[a]))
    }

    pub fn embedding(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let (vocab, n) = dims(self.shape(table));
        if self.shape(table).len() != 2 || ids.is_empty() {
            return Err(Error::shape("embedding", &[self.shape(table), &[ids.len()]]));
        }
        if let Some(bad) = ids.iter().find(|&&id| id >= vocab) {
            return Err(Error::contract(format!(
                "embedding: id {bad} out of range for table with {vocab} rows"
            )));
        }
        let tv = self.value(table);
        let mut out = Vec::with_capacity(ids.len() * n);
        for &id in ids {
            out.extend_from_slice(&tv[id * n..(id + 1) * n]);
        }
        Ok(self.push(vec![ids.len(), n], out, Op::Embedding(table, ids.to_vec()), &[table]))
    }

    /// Softmax along the last axis.
    pub fn softmax(&mut self, a: Var) -> Var {
        let (m, n) = dims(self.shape(a));
        let mut out = self.value(a).to_vec();
        for r in 0..m {
            softmax_in_place(&mut out[r * n..(r + 1) * n]);
        }
        self.push(self.shape(a).to_vec(), out, Op::Softmax(a), &[a])
    }

    /// Layer normalisation along the last axis followed by gain and shift.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var, eps: f64) -> Result<Var> {
        let (m, n) = dims(self.shape(x));
        if self.shape(gain) != [n] || self.shape(bias) != [n] {
            return Err(Error::shape(
                "layer_norm",
                &[self.shape(x), self.shape(gain), self.shape(bias)],
            ));
        }
        let xv = self.value(x);
        let gv = self.value(gain);
        let bv = self.value(bias);
        let mut normalized = vec![0.0; m * n];
        let mut inv_std = vec![0.0; m];
        let mut out = vec![0.0; m * n];
        for r in 0..m {
            let row = &xv[r * n..(r + 1) * n];
            let mean = row.iter().sum::<f64>() / n as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
            let inv = 1.0 / (var + eps).sqrt();
            inv_std[r] = inv;
            for j in 0..n {
                let h = (row[j] - mean) * inv;
                normalized[r * n + j] = h;
                out[r * n + j] = h * gv[j] + bv[j];
            }
        }
        let op = Op::LayerNorm {
            x,
            gain,
            bias,
            normalized,
            inv_std,
        };
        Ok(self.push(self.shape(x).to_vec(), out, op, &[x, gain, bias]))
    }

    /// GELU, tanh approximation.
    pub fn gelu(&mut self, a: Var) -> Var {
        let out = self
            .value(a)
            .iter()
            .map(|&x| 0.5 * x * (1.0 + (GELU_C * (x + 0.044715 * x * x * x)).tanh()))
            .collect();
        self.push(self.shape(a).to_vec(), out, Op::Gelu(a), &[a])
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let out = self.value(a).iter().map(|x| x.tanh()).collect();
        self.push(self.shape(a).to_vec(), out, Op::Tanh(a), &[a])
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.value(a).iter().map(|&x| sigmoid(x)).collect();
        self.push(self.shape(a).to_vec(), out, Op::Sigmoid(a), &[a])
    }

    /// Arithmetic mean over rows: `[m, n] -> [1, n]`.
    pub fn mean_rows(&mut self, a: Var) -> Result<Var> {
        let (m, n) = dims(self.shape(a));
        if m == 0 {
            return Err(Error::shape("mean_rows", &[self.shape(a)]));
        }
        let av = self.value(a);
        let mut out = vec![0.0; n];
        for r in 0..m {
            add_into(&mut out, &av[r * n..(r + 1) * n]);
        }
        out.iter_mut().for_each(|v| *v /= m as f64);
        Ok(self.push(vec![1, n], out, Op::MeanRows(a), &[a]))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).iter().sum();
        self.push(vec![1], vec![s], Op::Sum(a), &[a])
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let len = self.value(a).len().max(1);
        let s = self.sum(a);
        self.scale(s, 1.0 / len as f64)
    }

    /// Multi-head scaled dot-product attention.
    ///
    /// `q: [tq, d]`, `k, v: [tk, d]`; each of the `heads` heads owns a
    /// contiguous block of `d / heads` columns. With `causal`, query `i`
    /// sees keys `0..=i + (tk - tq)`, so a single query against a growing
    /// key cache sees everything up to and including itself.
    pub fn attention(&mut self, q: Var, k: Var, v: Var, heads: usize, causal: bool) -> Result<Var> {
        let (tq, d) = dims(self.shape(q));
        let (tk, dk) = dims(self.shape(k));
        let (tv, dv) = dims(self.shape(v));
        if d != dk || d != dv || tk != tv || heads == 0 || d % heads != 0 || (causal && tq > tk) {
            return Err(Error::shape(
                "attention",
                &[self.shape(q), self.shape(k), self.shape(v), &[heads]],
            ));
        }
        let dh = d / heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let qv = self.value(q);
        let kv = self.value(k);
        let vv = self.value(v);
        let mut probs = vec![0.0; heads * tq * tk];
        let mut out = vec![0.0; tq * d];
        for h in 0..heads {
            let c0 = h * dh;
            for i in 0..tq {
                let visible = if causal { i + (tk - tq) + 1 } else { tk };
                let p = &mut probs[(h * tq + i) * tk..(h * tq + i + 1) * tk];
                for j in 0..visible {
                    let mut s = 0.0;
                    for c in c0..c0 + dh {
                        s += qv[i * d + c] * kv[j * d + c];
                    }
                    p[j] = s * scale;
                }
                softmax_in_place(&mut p[..visible]);
                for j in 0..visible {
                    let w = p[j];
                    for c in c0..c0 + dh {
                        out[i * d + c] += w * vv[j * d + c];
                    }
                }
            }
        }
        let op = Op::Attention {
            q,
            k,
            v,
            heads,
            probs,
        };
        Ok(self.push(vec![tq, d], out, op, &[q, k, v]))
    }

    /// Mean over rows of `-sum_k target[r,k] * log softmax(logits)[r,k]`.
    /// Each target row must be a probability distribution.
    pub fn soft_cross_entropy(&mut self, logits: Var, targets: Vec<f64>) -> Result<Var> {
        let (m, n) = dims(self.shape(logits));
        if targets.len() != m * n {
            return Err(Error::shape("soft_cross_entropy", &[self.shape(logits), &[targets.len()]]));
        }
        let mut probs = self.value(logits).to_vec();
        let mut loss = 0.0;
        for r in 0..m {
            let row = &mut probs[r * n..(r + 1) * n];
            let lse = log_sum_exp(row);
            for (j, x) in row.iter_mut().enumerate() {
                let logp = *x - lse;
                let t = targets[r * n + j];
                if t != 0.0 {
                    loss -= t * logp;
                }
                *x = logp.exp();
            }
        }
        if m > 0 {
            loss /= m as f64;
        }
        let op = Op::SoftCrossEntropy {
            logits,
            targets,
            probs,
        };
        Ok(self.push(vec![1], vec![loss], op, &[logits]))
    }

    /// Mean over elements of the sigmoid cross-entropy, in the overflow-free
    /// form `max(x, 0) - x*y + log(1 + exp(-|x|))`.
    pub fn bce_with_logits(&mut self, logits: Var, targets: Vec<f64>) -> Result<Var> {
        let xv = self.value(logits);
        if targets.len() != xv.len() || xv.is_empty() {
            return Err(Error::shape("bce_with_logits", &[self.shape(logits), &[targets.len()]]));
        }
        let loss = xv
            .iter()
            .zip(&targets)
            .map(|(&x, &y)| x.max(0.0) - x * y + (-x.abs()).exp().ln_1p())
            .sum::<f64>()
            / xv.len() as f64;
        Ok(self.push(vec![1], vec![loss], Op::BceWithLogits { logits, targets }, &[logits]))
    }

    /// Record an op whose forward value was computed by the caller.
    pub fn custom(&mut self, inputs: &[Var], shape: &[usize], value: Vec<f64>, backward: CustomBackward) -> Var {
        self.push(shape.to_vec(), value, Op::Custom(inputs.to_vec(), backward), inputs)
    }

    /// Accumulate d(loss)/d(leaf) into every gradient-carrying leaf.
    /// Calling twice without flushing adds the gradients again.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.nodes[loss.0].value.len() != 1 {
            return Err(Error::shape("backward", &[self.shape(loss)]));
        }
        let mut grads: Vec<Option<Vec<f64>>> = (0..=loss.0).map(|_| None).collect();
        grads[loss.0] = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            if let Op::Leaf = node.op {
                if node.requires_grad {
                    let slot = &mut self.nodes[i].grad;
                    match slot {
                        Some(acc) => add_into(acc, &g),
                        None => *slot = Some(g),
                    }
                }
                continue;
            }
            self.propagate(i, &g, &mut grads);
        }
        Ok(())
    }

    fn propagate(&self, i: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let nodes = &self.nodes;
        let node = &nodes[i];
        let needs = |v: &Var| nodes[v.0].needs_grad;
        let mut send = |v: Var, contrib: Vec<f64>| {
            if !nodes[v.0].needs_grad {
                return;
            }
            match &mut grads[v.0] {
                Some(acc) => add_into(acc, &contrib),
                slot @ None => *slot = Some(contrib),
            }
        };
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (m, k) = dims(&nodes[a.0].shape);
                let n = dims(&nodes[b.0].shape).1;
                let av = &nodes[a.0].value;
                let bv = &nodes[b.0].value;
                if needs(a) {
                    let mut da = vec![0.0; m * k];
                    for r in 0..m {
                        let grow = &g[r * n..(r + 1) * n];
                        for p in 0..k {
                            let brow = &bv[p * n..(p + 1) * n];
                            da[r * k + p] = grow.iter().zip(brow).map(|(x, y)| x * y).sum();
                        }
                    }
                    send(*a, da);
                }
                if needs(b) {
                    let mut db = vec![0.0; k * n];
                    for r in 0..m {
                        let grow = &g[r * n..(r + 1) * n];
                        for p in 0..k {
                            let x = av[r * k + p];
                            if x == 0.0 {
                                continue;
                            }
                            for (d, gg) in db[p * n..(p + 1) * n].iter_mut().zip(grow) {
                                *d += x * gg;
                            }
                        }
                    }
                    send(*b, db);
                }
            }
            Op::Add(a, b) => {
                send(*a, g.to_vec());
                send(*b, g.to_vec());
            }
            Op::AddBias(a, b) => {
                let n = nodes[b.0].value.len();
                if needs(b) {
                    let mut db = vec![0.0; n];
                    for chunk in g.chunks(n) {
                        add_into(&mut db, chunk);
                    }
                    send(*b, db);
                }
                send(*a, g.to_vec());
            }
            Op::Mul(a, b) => {
                if needs(a) {
                    let bv = &nodes[b.0].value;
                    send(*a, g.iter().zip(bv).map(|(x, y)| x * y).collect());
                }
                if needs(b) {
                    let av = &nodes[a.0].value;
                    send(*b, g.iter().zip(av).map(|(x, y)| x * y).collect());
                }
            }
            Op::Scale(a, s) => send(*a, g.iter().map(|x| x * s).collect()),
            Op::ConcatCols(parts) => {
                let (rows, total) = dims(&node.shape);
                let mut offset = 0;
                for v in parts {
                    let c = dims(&nodes[v.0].shape).1;
                    if needs(v) {
                        let mut d = Vec::with_capacity(rows * c);
                        for r in 0..rows {
                            d.extend_from_slice(&g[r * total + offset..r * total + offset + c]);
                        }
                        send(*v, d);
                    }
                    offset += c;
                }
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for v in parts {
                    let len = nodes[v.0].value.len();
                    if needs(v) {
                        send(*v, g[offset..offset + len].to_vec());
                    }
                    offset += len;
                }
            }
            Op::SliceRows(a, start) => {
                let n = dims(&node.shape).1;
                let mut d = vec![0.0; nodes[a.0].value.len()];
                d[start * n..start * n + g.len()].copy_from_slice(g);
                send(*a, d);
            }
            Op::SliceCols(a, start) => {
                let (m, w) = dims(&node.shape);
                let n = dims(&nodes[a.0].shape).1;
                let mut d = vec![0.0; m * n];
                for r in 0..m {
                    d[r * n + start..r * n + start + w].copy_from_slice(&g[r * w..(r + 1) * w]);
                }
                send(*a, d);
            }
            Op::Transpose(a) => {
                let (m, n) = dims(&nodes[a.0].shape);
                let mut d = vec![0.0; m * n];
                for r in 0..m {
                    for c in 0..n {
                        d[r * n + c] = g[c * m + r];
                    }
                }
                send(*a, d);
            }
            Op::Reshape(a) => send(*a, g.to_vec()),
            Op::Embedding(table, ids) => {
                let n = dims(&node.shape).1;
                let mut d = vec![0.0; nodes[table.0].value.len()];
                for (t, &id) in ids.iter().enumerate() {
                    add_into(&mut d[id * n..(id + 1) * n], &g[t * n..(t + 1) * n]);
                }
                send(*table, d);
            }
            Op::Softmax(a) => {
                let (m, n) = dims(&node.shape);
                let y = &node.value;
                let mut d = vec![0.0; m * n];
                for r in 0..m {
                    let yr = &y[r * n..(r + 1) * n];
                    let gr = &g[r * n..(r + 1) * n];
                    let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                    for j in 0..n {
                        d[r * n + j] = yr[j] * (gr[j] - dot);
                    }
                }
                send(*a, d);
            }
            Op::LayerNorm {
                x,
                gain,
                bias,
                normalized,
                inv_std,
            } => {
                let (m, n) = dims(&node.shape);
                let gv = &nodes[gain.0].value;
                if needs(gain) {
                    let mut dg = vec![0.0; n];
                    for r in 0..m {
                        for j in 0..n {
                            dg[j] += g[r * n + j] * normalized[r * n + j];
                        }
                    }
                    send(*gain, dg);
                }
                if needs(bias) {
                    let mut db = vec![0.0; n];
                    for chunk in g.chunks(n) {
                        add_into(&mut db, chunk);
                    }
                    send(*bias, db);
                }
                if needs(x) {
                    let mut dx = vec![0.0; m * n];
                    for r in 0..m {
                        let xhat = &normalized[r * n..(r + 1) * n];
                        let dxhat: Vec<f64> = (0..n).map(|j| g[r * n + j] * gv[j]).collect();
                        let sum_d: f64 = dxhat.iter().sum();
                        let sum_dx: f64 = dxhat.iter().zip(xhat).map(|(a, b)| a * b).sum();
                        let scale = inv_std[r] / n as f64;
                        for j in 0..n {
                            dx[r * n + j] = scale * (n as f64 * dxhat[j] - sum_d - xhat[j] * sum_dx);
                        }
                    }
                    send(*x, dx);
                }
            }
            Op::Gelu(a) => {
                let d = nodes[a.0]
                    .value
                    .iter()
                    .zip(g)
                    .map(|(&x, gg)| {
                        let t = (GELU_C * (x + 0.044715 * x * x * x)).tanh();
                        let dt = (1.0 - t * t) * GELU_C * (1.0 + 3.0 * 0.044715 * x * x);
                        gg * (0.5 * (1.0 + t) + 0.5 * x * dt)
                    })
                    .collect();
                send(*a, d);
            }
            Op::Tanh(a) => send(*a, node.value.iter().zip(g).map(|(y, gg)| gg * (1.0 - y * y)).collect()),
            Op::Sigmoid(a) => send(*a, node.value.iter().zip(g).map(|(y, gg)| gg * y * (1.0 - y)).collect()),
            Op::MeanRows(a) => {
                let (m, n) = dims(&nodes[a.0].shape);
                let mut d = Vec::with_capacity(m * n);
                for _ in 0..m {
                    d.extend(g.iter().map(|x| x / m as f64));
                }
                send(*a, d);
            }
            Op::Sum(a) => send(*a, vec![g[0]; nodes[a.0].value.len()]),
            Op::Attention { q, k, v, heads, probs } => {
                let (tq, d) = dims(&nodes[q.0].shape);
                let tk = dims(&nodes[k.0].shape).0;
                let dh = d / heads;
                let scale = 1.0 / (dh as f64).sqrt();
                let qv = &nodes[q.0].value;
                let kv = &nodes[k.0].value;
                let vv = &nodes[v.0].value;
                let mut dq = vec![0.0; tq * d];
                let mut dk = vec![0.0; tk * d];
                let mut dv = vec![0.0; tk * d];
                let mut dp = vec![0.0; tk];
                for h in 0..*heads {
                    let c0 = h * dh;
                    for i in 0..tq {
                        let p = &probs[(h * tq + i) * tk..(h * tq + i + 1) * tk];
                        let gi = &g[i * d + c0..i * d + c0 + dh];
                        let mut dot = 0.0;
                        for j in 0..tk {
                            if p[j] == 0.0 {
                                dp[j] = 0.0;
                                continue;
                            }
                            let vj = &vv[j * d + c0..j * d + c0 + dh];
                            dp[j] = gi.iter().zip(vj).map(|(a, b)| a * b).sum();
                            dot += dp[j] * p[j];
                            for c in 0..dh {
                                dv[j * d + c0 + c] += p[j] * gi[c];
                            }
                        }
                        for j in 0..tk {
                            if p[j] == 0.0 {
                                continue;
                            }
                            let ds = p[j] * (dp[j] - dot) * scale;
                            for c in c0..c0 + dh {
                                dq[i * d + c] += ds * kv[j * d + c];
                                dk[j * d + c] += ds * qv[i * d + c];
                            }
                        }
                    }
                }
                send(*q, dq);
                send(*k, dk);
                send(*v, dv);
            }
            Op::SoftCrossEntropy { logits, targets, probs } => {
                let m = dims(&nodes[logits.0].shape).0.max(1);
                let scale = g[0] / m as f64;
                send(
                    *logits,
                    probs.iter().zip(targets).map(|(p, t)| (p - t) * scale).collect(),
                );
            }
            Op::BceWithLogits { logits, targets } => {
                let xv = &nodes[logits.0].value;
                let scale = g[0] / xv.len() as f64;
                send(
                    *logits,
                    xv.iter().zip(targets).map(|(&x, y)| (sigmoid(x) - y) * scale).collect(),
                );
            }
            Op::Custom(inputs, backward) => {
                for (v, d) in inputs.iter().zip(backward(g)) {
                    send(*v, d);
                }
            }
        }
    }

    /// Add every parameter leaf's accumulated gradient into `store` and clear it.
    pub fn flush_param_grads(&mut self, store: &mut ParamStore) {
        for &(v, id) in &self.params {
            if let Some(g) = self.nodes[v.0].grad.take() {
                add_into(&mut store.get_mut(id).grad, &g);
            }
        }
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

/// `log(sum(exp(xs)))`, exact `-inf` when every entry is `-inf`.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

pub fn softmax_in_place(xs: &mut [f64]) {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for x in xs.iter_mut() {
        *x = (*x - max).exp();
        total += *x;
    }
    for x in xs.iter_mut() {
        *x /= total;
    }
}

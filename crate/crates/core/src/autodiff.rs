//! Define-by-run reverse-mode differentiation over [`Tensor`] values.
//!
//! A [`Graph`] is an append-only list of nodes. Each node stores its
//! forward value and the operation that produced it, so nodes are already
//! in topological order and the backward pass is a single reverse sweep.
//! Graphs are built fresh for every sample and thrown away afterwards.
//!
//! Leaves come in two kinds. [`Graph::param`] marks a trainable parameter
//! identified by a [`ParamId`]; its gradient is reported by
//! [`Graph::backward`]. [`Graph::constant`] is a fixed input (pretrained
//! embeddings, frozen base models) and never receives a gradient.
//!
//! The set of operations is closed: every node is one of the [`Op`]
//! variants below, so an unsupported operation cannot be recorded.

use std::borrow::Cow;
use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::decode::num_spans;
use crate::error::{Error, Result};
use crate::tensor::{self, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

/// Index of a trainable tensor inside a [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ParamId(pub usize);

#[derive(Clone, Debug)]
enum Op {
    Constant,
    Param(ParamId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Scale(NodeId, f64),
    MatMul(NodeId, NodeId),
    MatMulT(NodeId, NodeId),
    Concat(Vec<NodeId>),
    Slice(NodeId, usize, usize),
    Stack(Vec<NodeId>),
    RowSelect(NodeId, usize),
    Sigmoid(NodeId),
    Tanh(NodeId),
    Relu(NodeId),
    Dropout(NodeId, Vec<f64>),
    LogSumExp(NodeId),
    RowLogSumExp(NodeId),
    Softmax(NodeId),
    Gather(NodeId, Vec<usize>),
    Sum(NodeId),
    SumSquares(NodeId),
    SpanFeatures(NodeId),
    WeightedSum(Vec<NodeId>, NodeId),
}

struct Node<'a> {
    value: Cow<'a, Tensor>,
    op: Op,
    requires_grad: bool,
}

#[derive(Default)]
pub struct Graph<'a> {
    nodes: Vec<Node<'a>>,
}

impl<'a> Graph<'a> {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
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

    fn push(&mut self, value: Cow<'a, Tensor>, op: Op, requires_grad: bool) -> NodeId {
        debug_assert!(value.all_finite(), "non-finite value from {op:?}");
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        NodeId(self.nodes.len() - 1)
    }

    fn op(&mut self, value: Tensor, op: Op, inputs: &[NodeId]) -> NodeId {
        let requires_grad = inputs.iter().any(|i| self.nodes[i.0].requires_grad);
        self.push(Cow::Owned(value), op, requires_grad)
    }

    pub fn constant(&mut self, value: Tensor) -> NodeId {
        self.push(Cow::Owned(value), Op::Constant, false)
    }

    pub fn constant_ref(&mut self, value: &'a Tensor) -> NodeId {
        self.push(Cow::Borrowed(value), Op::Constant, false)
    }

    pub fn param(&mut self, id: ParamId, value: &'a Tensor) -> NodeId {
        self.push(Cow::Borrowed(value), Op::Param(id), true)
    }

    pub fn param_owned(&mut self, id: ParamId, value: Tensor) -> NodeId {
        self.push(Cow::Owned(value), Op::Param(id), true)
    }

    /// Records every tensor of `store`, as parameters when `trainable`,
    /// otherwise as constants.
    pub fn bind(&mut self, store: &'a ParamStore, trainable: bool) -> Bound {
        Bound(
            store
                .iter()
                .map(|(id, _, t)| {
                    if trainable {
                        self.param(id, t)
                    } else {
                        self.constant_ref(t)
                    }
                })
                .collect(),
        )
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.value(a).zip_map(self.value(b), |x, y| x + y);
        self.op(v, Op::Add(a, b), &[a, b])
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.value(a).zip_map(self.value(b), |x, y| x - y);
        self.op(v, Op::Sub(a, b), &[a, b])
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.value(a).zip_map(self.value(b), |x, y| x * y);
        self.op(v, Op::Mul(a, b), &[a, b])
    }

    pub fn scale(&mut self, a: NodeId, factor: f64) -> NodeId {
        let v = self.value(a).map(|x| x * factor);
        self.op(v, Op::Scale(a, factor), &[a])
    }

    /// `a · b` with `a: [m,k]` and `b: [k,n]` or `b: [k]`.
    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.value(a).matmul(self.value(b));
        self.op(v, Op::MatMul(a, b), &[a, b])
    }

    /// `a · bᵀ` with `a: [m,k]` and `b: [n,k]`.
    pub fn matmul_t(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.value(a).matmul_t(self.value(b));
        self.op(v, Op::MatMulT(a, b), &[a, b])
    }

    /// Concatenation of vectors.
    pub fn concat(&mut self, parts: &[NodeId]) -> NodeId {
        assert!(!parts.is_empty(), "concat of nothing");
        let mut data = Vec::new();
        for &p in parts {
            let v = self.value(p);
            assert_eq!(v.shape().len(), 1, "concat expects vectors");
            data.extend_from_slice(v.data());
        }
        self.op(Tensor::vector(data), Op::Concat(parts.to_vec()), parts)
    }

    /// `a[start..start + len]` of a vector.
    pub fn slice(&mut self, a: NodeId, start: usize, len: usize) -> NodeId {
        let v = self.value(a);
        assert_eq!(v.shape().len(), 1, "slice expects a vector");
        assert!(start + len <= v.numel(), "slice out of range");
        let out = Tensor::vector(v.data()[start..start + len].to_vec());
        self.op(out, Op::Slice(a, start, len), &[a])
    }

    /// Stacks equal-length vectors as the rows of a matrix.
    pub fn stack(&mut self, rows: &[NodeId]) -> NodeId {
        assert!(!rows.is_empty(), "stack of nothing");
        let cols = self.value(rows[0]).numel();
        let mut data = Vec::with_capacity(rows.len() * cols);
        for &r in rows {
            let v = self.value(r);
            assert_eq!(v.shape(), &[cols], "stack expects equal-length vectors");
            data.extend_from_slice(v.data());
        }
        let out = Tensor::matrix(rows.len(), cols, data);
        self.op(out, Op::Stack(rows.to_vec()), rows)
    }

    /// Row `row` of a matrix, as a vector (embedding lookup).
    pub fn row_select(&mut self, table: NodeId, row: usize) -> NodeId {
        let v = self.value(table);
        assert!(row < v.rows(), "row {row} out of range");
        let out = Tensor::vector(v.row(row).to_vec());
        self.op(out, Op::RowSelect(table, row), &[table])
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(tensor::sigmoid);
        self.op(v, Op::Sigmoid(a), &[a])
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(f64::tanh);
        self.op(v, Op::Tanh(a), &[a])
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(|x| x.max(0.0));
        self.op(v, Op::Relu(a), &[a])
    }

    /// Multiplies by a precomputed mask. Gradient flows only through
    /// entries where the mask is nonzero.
    pub fn dropout_with_mask(&mut self, a: NodeId, mask: Vec<f64>) -> NodeId {
        assert_eq!(mask.len(), self.value(a).numel(), "dropout mask length");
        let v = self.value(a);
        let mut out = v.clone();
        for (o, m) in out.data_mut().iter_mut().zip(&mask) {
            *o *= m;
        }
        self.op(out, Op::Dropout(a, mask), &[a])
    }

    /// Inverted dropout: zeroes each entry with probability `ratio` and
    /// scales survivors by `1 / (1 - ratio)`. A ratio of zero returns `a`.
    pub fn dropout<R: Rng + ?Sized>(&mut self, a: NodeId, ratio: f64, rng: &mut R) -> NodeId {
        if ratio <= 0.0 {
            return a;
        }
        let mask = dropout_mask(self.value(a).numel(), ratio, rng);
        self.dropout_with_mask(a, mask)
    }

    /// `log Σ exp` over all entries; returns a scalar.
    pub fn log_sum_exp(&mut self, a: NodeId) -> NodeId {
        let v = tensor::log_sum_exp(self.value(a).data());
        self.op(Tensor::scalar(v), Op::LogSumExp(a), &[a])
    }

    /// `log Σ exp` of each row of a matrix; returns a vector.
    pub fn row_log_sum_exp(&mut self, a: NodeId) -> NodeId {
        let m = self.value(a);
        let out = (0..m.rows()).map(|r| tensor::log_sum_exp(m.row(r))).collect();
        self.op(Tensor::vector(out), Op::RowLogSumExp(a), &[a])
    }

    pub fn softmax(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a);
        assert_eq!(v.shape().len(), 1, "softmax expects a vector");
        let out = Tensor::vector(tensor::softmax(v.data()));
        self.op(out, Op::Softmax(a), &[a])
    }

    /// Picks entries by flat (row-major) index into a vector.
    pub fn gather(&mut self, a: NodeId, indices: Vec<usize>) -> NodeId {
        let v = self.value(a);
        let out = Tensor::vector(indices.iter().map(|&i| v.data()[i]).collect());
        self.op(out, Op::Gather(a, indices), &[a])
    }

    pub fn sum(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).data().iter().sum();
        self.op(Tensor::scalar(v), Op::Sum(a), &[a])
    }

    pub fn sum_squares(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).sum_squares();
        self.op(Tensor::scalar(v), Op::SumSquares(a), &[a])
    }

    /// Maps hidden states `[T, d]` to span features `[T(T+1)/2, 2d]`, one
    /// row `[h_i + h_j ; h_i - h_j]` per span in canonical order.
    pub fn span_features(&mut self, h: NodeId) -> NodeId {
        let out = span_feature_matrix(self.value(h));
        self.op(out, Op::SpanFeatures(h), &[h])
    }

    /// `Σ_m weights[m] · xs[m]` for equal-shaped `xs` and a weight vector.
    pub fn weighted_sum(&mut self, xs: &[NodeId], weights: NodeId) -> NodeId {
        let w = self.value(weights);
        assert_eq!(w.shape(), &[xs.len()], "one weight per input");
        let mut out = Tensor::zeros(self.value(xs[0]).shape());
        for (m, &x) in xs.iter().enumerate() {
            let wm = w.data()[m];
            let xv = self.value(x);
            assert_eq!(xv.shape(), out.shape(), "weighted_sum shape mismatch");
            for (o, &v) in out.data_mut().iter_mut().zip(xv.data()) {
                *o += wm * v;
            }
        }
        let mut inputs = xs.to_vec();
        inputs.push(weights);
        self.op(out, Op::WeightedSum(xs.to_vec(), weights), &inputs)
    }

    /// Reverse sweep from a scalar `loss`. Returns `dloss/dθ` for every
    /// parameter leaf reachable from `loss`.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients> {
        let loss_value = self.value(loss);
        if !loss_value.is_scalar() {
            return Err(Error::NonScalarLoss(loss_value.shape().to_vec()));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Tensor::filled(loss_value.shape(), 1.0));
        let mut out = Gradients::default();

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else {
                continue;
            };
            self.propagate(node, g, &mut grads, &mut out);
        }
        Ok(out)
    }

    fn wants(&self, id: NodeId) -> bool {
        self.nodes[id.0].requires_grad
    }

    fn propagate(
        &self,
        node: &Node<'a>,
        g: Tensor,
        grads: &mut [Option<Tensor>],
        out: &mut Gradients,
    ) {
        let mut acc = |id: NodeId, t: Tensor| {
            if !self.wants(id) {
                return;
            }
            match &mut grads[id.0] {
                Some(existing) => existing.add_assign(&t),
                slot => *slot = Some(t),
            }
        };
        match &node.op {
            Op::Constant => {}
            Op::Param(pid) => out.accumulate(*pid, g),
            Op::Add(a, b) => {
                acc(*b, g.clone());
                acc(*a, g);
            }
            Op::Sub(a, b) => {
                acc(*b, g.map(|x| -x));
                acc(*a, g);
            }
            Op::Mul(a, b) => {
                acc(*a, g.zip_map(self.value(*b), |x, y| x * y));
                acc(*b, g.zip_map(self.value(*a), |x, y| x * y));
            }
            Op::Scale(a, f) => acc(*a, g.map(|x| x * f)),
            Op::MatMul(a, b) => {
                let av = self.value(*a);
                let bv = self.value(*b);
                if bv.shape().len() == 1 {
                    let (m, k) = (av.rows(), av.cols());
                    if self.wants(*a) {
                        let mut ga = vec![0.0; m * k];
                        for i in 0..m {
                            let gi = g.data()[i];
                            for (o, &bj) in ga[i * k..(i + 1) * k].iter_mut().zip(bv.data()) {
                                *o = gi * bj;
                            }
                        }
                        acc(*a, Tensor::matrix(m, k, ga));
                    }
                    if self.wants(*b) {
                        let mut gb = vec![0.0; k];
                        for i in 0..m {
                            let gi = g.data()[i];
                            if gi == 0.0 {
                                continue;
                            }
                            for (o, &aij) in gb.iter_mut().zip(av.row(i)) {
                                *o += gi * aij;
                            }
                        }
                        acc(*b, Tensor::vector(gb));
                    }
                } else {
                    if self.wants(*a) {
                        acc(*a, g.matmul_t(bv));
                    }
                    if self.wants(*b) {
                        acc(*b, av.t_matmul(&g));
                    }
                }
            }
            Op::MatMulT(a, b) => {
                if self.wants(*a) {
                    acc(*a, g.matmul(self.value(*b)));
                }
                if self.wants(*b) {
                    acc(*b, g.t_matmul(self.value(*a)));
                }
            }
            Op::Concat(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let n = self.value(p).numel();
                    acc(p, Tensor::vector(g.data()[offset..offset + n].to_vec()));
                    offset += n;
                }
            }
            Op::Slice(a, start, len) => {
                let mut ga = Tensor::zeros(self.value(*a).shape());
                ga.data_mut()[*start..start + len].copy_from_slice(g.data());
                acc(*a, ga);
            }
            Op::Stack(rows) => {
                let cols = g.cols();
                for (r, &row) in rows.iter().enumerate() {
                    acc(row, Tensor::vector(g.data()[r * cols..(r + 1) * cols].to_vec()));
                }
            }
            Op::RowSelect(table, row) => {
                let tv = self.value(*table);
                let mut gt = Tensor::zeros(tv.shape());
                let cols = tv.cols();
                gt.data_mut()[row * cols..(row + 1) * cols].copy_from_slice(g.data());
                acc(*table, gt);
            }
            Op::Sigmoid(a) => {
                acc(*a, g.zip_map(&node.value, |gx, y| gx * y * (1.0 - y)));
            }
            Op::Tanh(a) => {
                acc(*a, g.zip_map(&node.value, |gx, y| gx * (1.0 - y * y)));
            }
            Op::Relu(a) => {
                acc(*a, g.zip_map(self.value(*a), |gx, x| if x > 0.0 { gx } else { 0.0 }));
            }
            Op::Dropout(a, mask) => {
                let mut ga = g;
                for (o, m) in ga.data_mut().iter_mut().zip(mask) {
                    *o *= m;
                }
                acc(*a, ga);
            }
            Op::LogSumExp(a) => {
                let av = self.value(*a);
                let lse = node.value.item();
                let gs = g.item();
                acc(*a, av.map(|x| gs * (x - lse).exp()));
            }
            Op::RowLogSumExp(a) => {
                let av = self.value(*a);
                let cols = av.cols();
                let mut ga = Tensor::zeros(av.shape());
                for r in 0..av.rows() {
                    let lse = node.value.data()[r];
                    let gr = g.data()[r];
                    for (o, &x) in ga.data_mut()[r * cols..(r + 1) * cols]
                        .iter_mut()
                        .zip(av.row(r))
                    {
                        *o = gr * (x - lse).exp();
                    }
                }
                acc(*a, ga);
            }
            Op::Softmax(a) => {
                let y = node.value.data();
                let inner = tensor::dot(g.data(), y);
                let ga = y
                    .iter()
                    .zip(g.data())
                    .map(|(&yi, &gi)| yi * (gi - inner))
                    .collect();
                acc(*a, Tensor::vector(ga));
            }
            Op::Gather(a, indices) => {
                let mut ga = Tensor::zeros(self.value(*a).shape());
                for (k, &i) in indices.iter().enumerate() {
                    ga.data_mut()[i] += g.data()[k];
                }
                acc(*a, ga);
            }
            Op::Sum(a) => {
                let gs = g.item();
                acc(*a, Tensor::filled(self.value(*a).shape(), gs));
            }
            Op::SumSquares(a) => {
                let gs = g.item();
                acc(*a, self.value(*a).map(|x| 2.0 * gs * x));
            }
            Op::SpanFeatures(h) => {
                let hv = self.value(*h);
                let (t, d) = (hv.rows(), hv.cols());
                let mut gh = Tensor::zeros(hv.shape());
                let mut s = 0;
                for i in 0..t {
                    for j in i..t {
                        let row = &g.data()[s * 2 * d..(s + 1) * 2 * d];
                        let (plus, minus) = row.split_at(d);
                        let ghd = gh.data_mut();
                        for k in 0..d {
                            ghd[i * d + k] += plus[k] + minus[k];
                            ghd[j * d + k] += plus[k] - minus[k];
                        }
                        s += 1;
                    }
                }
                acc(*h, gh);
            }
            Op::WeightedSum(xs, weights) => {
                let w = self.value(*weights);
                if self.wants(*weights) {
                    let gw = xs
                        .iter()
                        .map(|&x| tensor::dot(g.data(), self.value(x).data()))
                        .collect();
                    acc(*weights, Tensor::vector(gw));
                }
                for (m, &x) in xs.iter().enumerate() {
                    let wm = w.data()[m];
                    acc(x, g.map(|v| v * wm));
                }
            }
        }
    }
}

/// Graph nodes for the tensors of a [`ParamStore`].
#[derive(Clone, Debug)]
pub struct Bound(Vec<NodeId>);

impl Bound {
    pub fn get(&self, id: ParamId) -> NodeId {
        self.0[id.0]
    }

    pub fn nodes(&self) -> &[NodeId] {
        &self.0
    }
}

/// Span feature rows for hidden states `h: [T, d]`, in canonical span order.
pub fn span_feature_matrix(h: &Tensor) -> Tensor {
    let (t, d) = (h.rows(), h.cols());
    let mut data = Vec::with_capacity(num_spans(t) * 2 * d);
    for i in 0..t {
        for j in i..t {
            let (hi, hj) = (h.row(i), h.row(j));
            data.extend(hi.iter().zip(hj).map(|(a, b)| a + b));
            data.extend(hi.iter().zip(hj).map(|(a, b)| a - b));
        }
    }
    Tensor::matrix(num_spans(t), 2 * d, data)
}

/// Inverted-dropout mask: each entry is 0 with probability `ratio`,
/// otherwise `1 / (1 - ratio)`.
pub fn dropout_mask<R: Rng + ?Sized>(n: usize, ratio: f64, rng: &mut R) -> Vec<f64> {
    assert!((0.0..1.0).contains(&ratio), "dropout ratio {ratio}");
    let keep = 1.0 - ratio;
    (0..n)
        .map(|_| {
            if rng.random::<f64>() < keep {
                1.0 / keep
            } else {
                0.0
            }
        })
        .collect()
}

/// Parameter gradients from one or more backward passes.
#[derive(Clone, Debug, Default)]
pub struct Gradients {
    grads: BTreeMap<ParamId, Tensor>,
}

impl Gradients {
    pub fn get(&self, id: ParamId) -> Option<&Tensor> {
        self.grads.get(&id)
    }

    pub fn accumulate(&mut self, id: ParamId, g: Tensor) {
        match self.grads.get_mut(&id) {
            Some(existing) => existing.add_assign(&g),
            None => {
                self.grads.insert(id, g);
            }
        }
    }

    /// Adds every gradient of `other` into `self`.
    pub fn merge(&mut self, other: Gradients) {
        for (id, g) in other.grads {
            self.accumulate(id, g);
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Tensor)> {
        self.grads.iter().map(|(k, v)| (*k, v))
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }

    pub fn all_finite(&self) -> bool {
        self.grads.values().all(Tensor::all_finite)
    }
}

/// Named trainable tensors addressed by [`ParamId`].
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawParamStore")]
pub struct ParamStore {
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

#[derive(Deserialize)]
struct RawParamStore {
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

impl TryFrom<RawParamStore> for ParamStore {
    type Error = Error;

    fn try_from(raw: RawParamStore) -> Result<Self> {
        if raw.names.len() != raw.tensors.len() {
            return Err(Error::contract(format!(
                "{} parameter names for {} tensors",
                raw.names.len(),
                raw.tensors.len()
            )));
        }
        let mut store = ParamStore::new();
        for (name, t) in raw.names.into_iter().zip(raw.tensors) {
            if store.id_of(&name).is_some() {
                return Err(Error::contract(format!("duplicate parameter {name}")));
            }
            store.add(name, t);
        }
        Ok(store)
    }
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> ParamId {
        let name = name.into();
        assert!(self.id_of(&name).is_none(), "duplicate parameter {name}");
        self.names.push(name);
        self.tensors.push(value);
        ParamId(self.tensors.len() - 1)
    }

    pub fn id_of(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.tensors[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.tensors.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &str, &Tensor)> {
        self.names
            .iter()
            .zip(&self.tensors)
            .enumerate()
            .map(|(i, (n, t))| (ParamId(i), n.as_str(), t))
    }

    /// Total number of scalar parameters.
    pub fn numel(&self) -> usize {
        self.tensors.iter().map(Tensor::numel).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn square_gradient() {
        let x = Tensor::scalar(3.0);
        let mut g = Graph::new();
        let xn = g.param(ParamId(0), &x);
        let y = g.mul(xn, xn);
        let grads = g.backward(y).unwrap();
        assert_eq!(grads.get(ParamId(0)).unwrap().item(), 6.0);
    }

    #[test]
    fn log_sum_exp_gradient_is_softmax() {
        let v = Tensor::vector(vec![0.0, 0.0]);
        let mut g = Graph::new();
        let vn = g.param(ParamId(0), &v);
        let l = g.log_sum_exp(vn);
        let grads = g.backward(l).unwrap();
        assert_eq!(grads.get(ParamId(0)).unwrap().data(), &[0.5, 0.5]);
    }

    #[test]
    fn non_scalar_loss_is_rejected() {
        let v = Tensor::vector(vec![1.0, 2.0]);
        let mut g = Graph::new();
        let vn = g.param(ParamId(0), &v);
        let r = g.relu(vn);
        assert!(matches!(g.backward(r), Err(Error::NonScalarLoss(_))));
    }

    #[test]
    fn constants_get_no_gradient() {
        let a = Tensor::vector(vec![1.0, 2.0]);
        let b = Tensor::vector(vec![3.0, 4.0]);
        let mut g = Graph::new();
        let an = g.param(ParamId(0), &a);
        let bn = g.constant_ref(&b);
        let p = g.mul(an, bn);
        let s = g.sum(p);
        let grads = g.backward(s).unwrap();
        assert_eq!(grads.len(), 1);
        assert_eq!(grads.get(ParamId(0)).unwrap().data(), &[3.0, 4.0]);
    }

    #[test]
    fn keep_everything_dropout_is_identity() {
        let a = Tensor::vector(vec![1.0, -2.0, 3.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut g = Graph::new();
        let an = g.constant_ref(&a);
        let d = g.dropout(an, 0.0, &mut rng);
        assert_eq!(d, an);
    }

    #[test]
    fn dropout_routes_gradient_through_kept_entries() {
        let a = Tensor::vector(vec![1.0, -2.0, 3.0, 4.0]);
        let mut g = Graph::new();
        let an = g.param(ParamId(0), &a);
        let d = g.dropout_with_mask(an, vec![2.0, 0.0, 2.0, 0.0]);
        assert_eq!(g.value(d).data(), &[2.0, 0.0, 6.0, 0.0]);
        let s = g.sum(d);
        let grads = g.backward(s).unwrap();
        assert_eq!(grads.get(ParamId(0)).unwrap().data(), &[2.0, 0.0, 2.0, 0.0]);
    }

    #[test]
    fn dropout_mask_scales_survivors() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mask = dropout_mask(10_000, 0.5, &mut rng);
        assert!(mask.iter().all(|&m| m == 0.0 || m == 2.0));
        let kept = mask.iter().filter(|&&m| m > 0.0).count();
        assert!((4_500..5_500).contains(&kept));
    }

    #[test]
    fn shared_param_gradients_accumulate() {
        let w = Tensor::matrix(1, 2, vec![1.0, 2.0]);
        let x = Tensor::vector(vec![3.0, 5.0]);
        let mut g = Graph::new();
        let wn = g.param(ParamId(0), &w);
        let xn = g.constant_ref(&x);
        let a = g.matmul(wn, xn);
        let b = g.matmul(wn, xn);
        let s = g.add(a, b);
        let l = g.sum(s);
        let grads = g.backward(l).unwrap();
        assert_eq!(grads.get(ParamId(0)).unwrap().data(), &[6.0, 10.0]);
    }
}

//! Reverse-mode differentiation over a define-by-run tape.
//!
//! Values are computed eagerly as nodes are appended, so the tape is always
//! in topological order and parents always precede children. A reverse sweep
//! seeds the (scalar) loss adjoint with 1 and walks the tape backwards,
//! accumulating adjoints; gradients of nodes flagged as parameters are
//! collected into a map keyed by the caller's parameter slot.
//!
//! The primitive set is small on purpose: matmul, transpose, add, hadamard,
//! row softmax, relu, layer norm, column concat/slice, full sum, pairwise
//! row cosine, and log-softmax cross-entropy. Everything else (scaling,
//! subtraction, row broadcast, sigmoid, row slicing) is composed from these.

use std::collections::HashMap;

use crate::error::{CoreError, Result};
use crate::matrix::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(pub usize);

#[derive(Debug, Clone)]
enum Op {
    Constant,
    Param { slot: usize },
    MatMul,
    Transpose,
    Add,
    Hadamard,
    RowSoftmax,
    Relu,
    LayerNorm { eps: f64 },
    ConcatCols,
    SliceCols { start: usize },
    SumAll,
    CosineSim,
    CrossEntropy { target: usize },
}

#[derive(Debug)]
struct Node {
    op: Op,
    parents: Vec<usize>,
    value: Matrix,
}

/// Gradients keyed by parameter slot, summed over every tape node bound to
/// that slot.
#[derive(Debug, Default)]
pub struct Gradients {
    by_slot: HashMap<usize, Matrix>,
}

impl Gradients {
    pub fn get(&self, slot: usize) -> Option<&Matrix> {
        self.by_slot.get(&slot)
    }

    pub fn len(&self) -> usize {
        self.by_slot.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_slot.is_empty()
    }
}

#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    adjoints: Vec<Matrix>,
}

impl Graph {
    pub fn new() -> Self {
        Graph::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Matrix {
        &self.nodes[id.0].value
    }

    /// Adjoint of `id` after the last `reverse_sweep`. Same shape as the
    /// node's value.
    pub fn adjoint(&self, id: NodeId) -> &Matrix {
        &self.adjoints[id.0]
    }

    fn push(&mut self, op: Op, parents: Vec<usize>, value: Matrix) -> NodeId {
        debug_assert!(parents.iter().all(|&p| p < self.nodes.len()));
        self.nodes.push(Node { op, parents, value });
        NodeId(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Matrix) -> NodeId {
        self.push(Op::Constant, vec![], value)
    }

    /// A leaf bound to caller-side parameter storage; `slot` keys the entry
    /// in the gradient map.
    pub fn param(&mut self, slot: usize, value: Matrix) -> NodeId {
        self.push(Op::Param { slot }, vec![], value)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let value = self.value(a).matmul(self.value(b))?;
        Ok(self.push(Op::MatMul, vec![a.0, b.0], value))
    }

    pub fn transpose(&mut self, a: NodeId) -> NodeId {
        let value = self.value(a).transpose();
        self.push(Op::Transpose, vec![a.0], value)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let value = self.value(a).add(self.value(b))?;
        Ok(self.push(Op::Add, vec![a.0, b.0], value))
    }

    pub fn hadamard(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let value = self.value(a).hadamard(self.value(b))?;
        Ok(self.push(Op::Hadamard, vec![a.0, b.0], value))
    }

    pub fn row_softmax(&mut self, a: NodeId) -> NodeId {
        let value = self.value(a).row_softmax();
        self.push(Op::RowSoftmax, vec![a.0], value)
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        let value = self.value(a).relu();
        self.push(Op::Relu, vec![a.0], value)
    }

    pub fn layer_norm(&mut self, x: NodeId, gain: NodeId, shift: NodeId, eps: f64) -> Result<NodeId> {
        let value = self
            .value(x)
            .layer_norm(self.value(gain), self.value(shift), eps)?;
        Ok(self.push(Op::LayerNorm { eps }, vec![x.0, gain.0, shift.0], value))
    }

    pub fn concat_cols(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        let values: Vec<&Matrix> = parts.iter().map(|&p| self.value(p)).collect();
        let value = Matrix::concat_cols(&values)?;
        Ok(self.push(Op::ConcatCols, parts.iter().map(|p| p.0).collect(), value))
    }

    pub fn slice_cols(&mut self, a: NodeId, start: usize, end: usize) -> Result<NodeId> {
        let value = self.value(a).slice_cols(start, end)?;
        Ok(self.push(Op::SliceCols { start }, vec![a.0], value))
    }

    pub fn sum_all(&mut self, a: NodeId) -> NodeId {
        let value = Matrix::from_computed(1, 1, vec![self.value(a).sum()]);
        self.push(Op::SumAll, vec![a.0], value)
    }

    pub fn cosine_sim(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let value = self.value(a).cosine_sim(self.value(b))?;
        Ok(self.push(Op::CosineSim, vec![a.0, b.0], value))
    }

    /// Log-softmax cross-entropy of a `1 x C` logit row against a class
    /// index: `logsumexp(logits) - logits[target]`, max-shifted.
    pub fn cross_entropy(&mut self, logits: NodeId, target: usize) -> Result<NodeId> {
        let v = self.value(logits);
        if v.rows() != 1 {
            return Err(CoreError::contract(
                "cross_entropy expects a single logit row",
            ));
        }
        if target >= v.cols() {
            return Err(CoreError::contract(format!(
                "cross_entropy target {target} out of range for {} classes",
                v.cols()
            )));
        }
        let row = v.row(0);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
        let value = Matrix::from_computed(1, 1, vec![lse - row[target]]);
        Ok(self.push(Op::CrossEntropy { target }, vec![logits.0], value))
    }

    // ----- compositions over the primitive set -----

    pub fn scale(&mut self, a: NodeId, factor: f64) -> NodeId {
        let (r, c) = self.value(a).shape();
        let f = self.constant(Matrix::full(r, c, factor));
        self.hadamard(a, f).expect("same shape by construction")
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let neg = self.scale(b, -1.0);
        self.add(a, neg)
    }

    /// Repeat a `1 x d` row `n` times (ones-column matmul).
    pub fn broadcast_rows(&mut self, row: NodeId, n: usize) -> Result<NodeId> {
        if self.value(row).rows() != 1 {
            return Err(CoreError::contract("broadcast_rows expects a single row"));
        }
        let ones = self.constant(Matrix::full(n, 1, 1.0));
        self.matmul(ones, row)
    }

    pub fn concat_rows(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        let transposed: Vec<NodeId> = parts.iter().map(|&p| self.transpose(p)).collect();
        let cat = self.concat_cols(&transposed)?;
        Ok(self.transpose(cat))
    }

    pub fn slice_rows(&mut self, a: NodeId, start: usize, end: usize) -> Result<NodeId> {
        let t = self.transpose(a);
        let s = self.slice_cols(t, start, end)?;
        Ok(self.transpose(s))
    }

    pub fn mean_all(&mut self, a: NodeId) -> NodeId {
        let (r, c) = self.value(a).shape();
        let s = self.sum_all(a);
        self.scale(s, 1.0 / (r * c) as f64)
    }

    /// Sum of elementwise logistic sigmoids of a `1 x n` row, built from the
    /// softmax primitive: `sigma(x) = softmax([x, 0])_0`.
    pub fn sum_sigmoid(&mut self, a: NodeId) -> Result<NodeId> {
        let v = self.value(a);
        if v.rows() != 1 {
            return Err(CoreError::contract("sum_sigmoid expects a single row"));
        }
        let n = v.cols();
        let at = self.transpose(a);
        let zeros = self.constant(Matrix::zeros(n, 1));
        let pair = self.concat_cols(&[at, zeros])?;
        let soft = self.row_softmax(pair);
        let sig = self.slice_cols(soft, 0, 1)?;
        Ok(self.sum_all(sig))
    }

    /// Backpropagate from a scalar loss node. Every node's adjoint is
    /// materialized (zero where the loss does not depend on it) and the
    /// gradients of parameter leaves are returned.
    pub fn reverse_sweep(&mut self, loss: NodeId) -> Result<Gradients> {
        if !self.value(loss).is_scalar() {
            let (r, c) = self.value(loss).shape();
            return Err(CoreError::contract(format!(
                "reverse sweep needs a 1x1 loss node, got {r}x{c}"
            )));
        }
        self.adjoints = self
            .nodes
            .iter()
            .map(|n| Matrix::zeros(n.value.rows(), n.value.cols()))
            .collect();
        self.adjoints[loss.0] = Matrix::full(1, 1, 1.0);

        for i in (0..=loss.0).rev() {
            self.backward_node(i);
        }

        let mut grads = Gradients::default();
        for (i, node) in self.nodes.iter().enumerate() {
            if let Op::Param { slot } = node.op {
                match grads.by_slot.get_mut(&slot) {
                    Some(g) => g.add_assign(&self.adjoints[i]),
                    None => {
                        grads.by_slot.insert(slot, self.adjoints[i].clone());
                    }
                }
            }
        }
        Ok(grads)
    }

    fn backward_node(&mut self, i: usize) {
        let (head, tail) = self.adjoints.split_at_mut(i);
        let g = &tail[0];
        let node = &self.nodes[i];
        let parent_value = |p: usize| &self.nodes[p].value;

        match node.op {
            Op::Constant | Op::Param { .. } => {}
            Op::MatMul => {
                let (a, b) = (node.parents[0], node.parents[1]);
                let da = g.matmul(&parent_value(b).transpose()).expect("shape");
                head[a].add_assign(&da);
                let db = parent_value(a).transpose().matmul(g).expect("shape");
                head[b].add_assign(&db);
            }
            Op::Transpose => {
                head[node.parents[0]].add_assign(&g.transpose());
            }
            Op::Add => {
                head[node.parents[0]].add_assign(g);
                head[node.parents[1]].add_assign(g);
            }
            Op::Hadamard => {
                let (a, b) = (node.parents[0], node.parents[1]);
                let da = g.hadamard(parent_value(b)).expect("shape");
                head[a].add_assign(&da);
                let db = g.hadamard(parent_value(a)).expect("shape");
                head[b].add_assign(&db);
            }
            Op::RowSoftmax => {
                // dL/ds_j = p_j * (g_j - sum_k g_k p_k) per row
                let p = &node.value;
                let (rows, cols) = p.shape();
                let mut dx = Matrix::zeros(rows, cols);
                for r in 0..rows {
                    let prow = p.row(r);
                    let grow = g.row(r);
                    let inner: f64 = prow.iter().zip(grow).map(|(pp, gg)| pp * gg).sum();
                    for c in 0..cols {
                        dx.set(r, c, prow[c] * (grow[c] - inner));
                    }
                }
                head[node.parents[0]].add_assign(&dx);
            }
            Op::Relu => {
                let x = parent_value(node.parents[0]);
                let mut dx = g.clone();
                for (d, &v) in dx.data_mut().iter_mut().zip(x.data()) {
                    if v <= 0.0 {
                        *d = 0.0;
                    }
                }
                head[node.parents[0]].add_assign(&dx);
            }
            Op::LayerNorm { eps } => {
                let (px, pg, ps) = (node.parents[0], node.parents[1], node.parents[2]);
                let x = parent_value(px);
                let gain = parent_value(pg);
                let (rows, cols) = x.shape();
                let n = cols as f64;
                let mut dx = Matrix::zeros(rows, cols);
                let mut dgain = Matrix::zeros(1, cols);
                let mut dshift = Matrix::zeros(1, cols);
                for r in 0..rows {
                    let xrow = x.row(r);
                    let grow = g.row(r);
                    let mean = xrow.iter().sum::<f64>() / n;
                    let var = xrow.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
                    let inv = 1.0 / (var + eps).sqrt();
                    let xhat: Vec<f64> = xrow.iter().map(|v| (v - mean) * inv).collect();
                    let dxhat: Vec<f64> = (0..cols).map(|c| grow[c] * gain.get(0, c)).collect();
                    let mean_dxhat = dxhat.iter().sum::<f64>() / n;
                    let mean_dxhat_xhat =
                        dxhat.iter().zip(&xhat).map(|(a, b)| a * b).sum::<f64>() / n;
                    for c in 0..cols {
                        dx.set(
                            r,
                            c,
                            inv * (dxhat[c] - mean_dxhat - xhat[c] * mean_dxhat_xhat),
                        );
                        dgain.set(0, c, dgain.get(0, c) + grow[c] * xhat[c]);
                        dshift.set(0, c, dshift.get(0, c) + grow[c]);
                    }
                }
                head[px].add_assign(&dx);
                head[pg].add_assign(&dgain);
                head[ps].add_assign(&dshift);
            }
            Op::ConcatCols => {
                let mut offset = 0;
                for &p in &node.parents {
                    let w = parent_value(p).cols();
                    let part = g.slice_cols(offset, offset + w).expect("range");
                    head[p].add_assign(&part);
                    offset += w;
                }
            }
            Op::SliceCols { start } => {
                let p = node.parents[0];
                let parent_cols = parent_value(p).cols();
                let mut dx = Matrix::zeros(g.rows(), parent_cols);
                for r in 0..g.rows() {
                    for c in 0..g.cols() {
                        dx.set(r, start + c, g.get(r, c));
                    }
                }
                head[p].add_assign(&dx);
            }
            Op::SumAll => {
                let p = node.parents[0];
                let (r, c) = parent_value(p).shape();
                head[p].add_assign(&Matrix::full(r, c, g.get(0, 0)));
            }
            Op::CosineSim => {
                let (pa, pb) = (node.parents[0], node.parents[1]);
                let a = parent_value(pa);
                let b = parent_value(pb);
                let cvals = &node.value;
                let d = a.cols();
                let norm = |m: &Matrix, r: usize| -> f64 {
                    m.row(r).iter().map(|v| v * v).sum::<f64>().sqrt()
                };
                let norms_a: Vec<f64> = (0..a.rows()).map(|r| norm(a, r)).collect();
                let norms_b: Vec<f64> = (0..b.rows()).map(|r| norm(b, r)).collect();
                let mut da = Matrix::zeros(a.rows(), d);
                let mut db = Matrix::zeros(b.rows(), d);
                for x in 0..a.rows() {
                    for y in 0..b.rows() {
                        let gxy = g.get(x, y);
                        if gxy == 0.0 || norms_a[x] == 0.0 || norms_b[y] == 0.0 {
                            continue;
                        }
                        let c = cvals.get(x, y);
                        let inv = 1.0 / (norms_a[x] * norms_b[y]);
                        let inv_a2 = 1.0 / (norms_a[x] * norms_a[x]);
                        let inv_b2 = 1.0 / (norms_b[y] * norms_b[y]);
                        for k in 0..d {
                            let av = a.get(x, k);
                            let bv = b.get(y, k);
                            da.set(x, k, da.get(x, k) + gxy * (bv * inv - c * av * inv_a2));
                            db.set(y, k, db.get(y, k) + gxy * (av * inv - c * bv * inv_b2));
                        }
                    }
                }
                head[pa].add_assign(&da);
                head[pb].add_assign(&db);
            }
            Op::CrossEntropy { target } => {
                let p = node.parents[0];
                let probs = parent_value(p).row_softmax();
                let mut dx = probs;
                let t = dx.get(0, target);
                dx.set(0, target, t - 1.0);
                head[p].add_assign(&dx.scale(g.get(0, 0)));
            }
        }
    }
}

//! Tape-based reverse-mode differentiation over a fixed primitive set.
//!
//! A tape records the forward pass as an append-only list of nodes, so
//! topological order is insertion order. One training step owns one
//! tape; evaluation builds a throwaway tape and never calls backward.

use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

use crate::graph::SparseAdjacency;
use crate::tensor::{ShapeError, Tensor};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TapeError {
    #[error(transparent)]
    Shape(#[from] ShapeError),
    #[error("backward requires a scalar loss node, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("mask shape {mask:?} does not broadcast over {input:?}")]
    MaskShape { mask: Vec<usize>, input: Vec<usize> },
    #[error("mse weights sum to zero: no valid entries")]
    EmptyMse,
    #[error("adjacency is {adj_nodes} nodes but features have {feat_rows} rows")]
    AdjacencyShape { adj_nodes: usize, feat_rows: usize },
}

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(u32);

impl NodeId {
    fn idx(self) -> usize {
        self.0 as usize
    }
}

enum Op {
    /// Input node; `differentiable` marks trainable parameters.
    Leaf,
    MatMul(NodeId, NodeId),
    /// Elementwise sum of two same-shape nodes.
    Add(NodeId, NodeId),
    /// x [m x n] plus a [1 x n] bias broadcast over rows.
    AddRow(NodeId, NodeId),
    /// Elementwise product of two same-shape nodes.
    Mul(NodeId, NodeId),
    Relu(NodeId),
    /// Elementwise product with a constant mask; covers dropout and the
    /// structured node masks. A [m x 1] mask scales whole rows of an
    /// [m x n] input.
    MaskMul(NodeId, Tensor),
    /// Propagation by a constant normalized adjacency (row-major sparse).
    AdjMul(SparseAdjacency, NodeId),
    /// Elementwise maximum; the relation-pooling step. Ties route their
    /// gradient to the first argument.
    Max(NodeId, NodeId),
    /// Same data viewed under a new shape.
    Reshape(NodeId),
    /// Sum of all entries, scalar result.
    Sum(NodeId),
    /// Weighted mean squared error against a constant target:
    /// sum(w * (x - t)^2) / sum(w). Zero weights drop entries from both
    /// the loss and its gradient.
    Mse { target: Tensor, weight: Tensor, weight_sum: f64, input: NodeId },
}

struct Node {
    op: Op,
    value: Tensor,
    needs_grad: bool,
}

/// Recorded forward pass. Nodes only ever get appended, so every node's
/// inputs precede it and backward is a single reverse sweep.
pub struct Tape {
    nodes: Vec<Node>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.idx()].value
    }

    fn push(&mut self, op: Op, value: Tensor, needs_grad: bool) -> NodeId {
        let id = NodeId(self.nodes.len() as u32);
        self.nodes.push(Node { op, value, needs_grad });
        id
    }

    fn needs(&self, id: NodeId) -> bool {
        self.nodes[id.idx()].needs_grad
    }

    /// Differentiable leaf; gradients are accumulated for it.
    pub fn param(&mut self, value: Tensor) -> NodeId {
        self.push(Op::Leaf, value, true)
    }

    /// Non-differentiable input.
    pub fn constant(&mut self, value: Tensor) -> NodeId {
        self.push(Op::Leaf, value, false)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, TapeError> {
        let value = self.value(a).matmul(self.value(b))?;
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(Op::MatMul(a, b), value, needs))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, TapeError> {
        let value = self.value(a).zip_map(self.value(b), |x, y| x + y)?;
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(Op::Add(a, b), value, needs))
    }

    /// x [m x n] + bias [1 x n], bias broadcast over the m rows.
    pub fn add_row(&mut self, x: NodeId, bias: NodeId) -> Result<NodeId, TapeError> {
        let xv = self.value(x);
        let bv = self.value(bias);
        let (m, n) = (xv.rows(), xv.cols());
        if bv.shape() != [1, n] {
            return Err(ShapeError::Mismatch { expected: vec![1, n], got: bv.shape().to_vec() }.into());
        }
        let mut data = xv.data().to_vec();
        for r in 0..m {
            for (d, b) in data[r * n..(r + 1) * n].iter_mut().zip(bv.data()) {
                *d += b;
            }
        }
        let value = Tensor::matrix(m, n, data)?;
        let needs = self.needs(x) || self.needs(bias);
        Ok(self.push(Op::AddRow(x, bias), value, needs))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, TapeError> {
        let value = self.value(a).zip_map(self.value(b), |x, y| x * y)?;
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(Op::Mul(a, b), value, needs))
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        let value = self.value(x).map(|v| if v > 0.0 { v } else { 0.0 });
        let needs = self.needs(x);
        self.push(Op::Relu(x), value, needs)
    }

    /// Multiply by a constant mask. Accepts a mask of the same shape or
    /// a [m x 1] column that scales whole rows; gradients are zero
    /// wherever the mask is zero.
    pub fn mask_mul(&mut self, x: NodeId, mask: Tensor) -> Result<NodeId, TapeError> {
        let xv = self.value(x);
        let value = apply_mask_values(xv, &mask)
            .ok_or_else(|| TapeError::MaskShape { mask: mask.shape().to_vec(), input: xv.shape().to_vec() })?;
        let needs = self.needs(x);
        Ok(self.push(Op::MaskMul(x, mask), value, needs))
    }

    /// y = A_hat * x for a constant normalized adjacency.
    pub fn adj_mul(&mut self, adj: &SparseAdjacency, x: NodeId) -> Result<NodeId, TapeError> {
        let xv = self.value(x);
        let (rows, cols) = (xv.rows(), xv.cols());
        if rows != adj.n_nodes() {
            return Err(TapeError::AdjacencyShape { adj_nodes: adj.n_nodes(), feat_rows: rows });
        }
        let mut out = vec![0.0; rows * cols];
        adj.mul_into(xv.data(), cols, &mut out);
        let value = Tensor::matrix(rows, cols, out)?;
        let needs = self.needs(x);
        Ok(self.push(Op::AdjMul(adj.clone(), x), value, needs))
    }

    pub fn max(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, TapeError> {
        let value = self.value(a).zip_map(self.value(b), f64::max)?;
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(Op::Max(a, b), value, needs))
    }

    pub fn reshape(&mut self, x: NodeId, shape: impl Into<Vec<usize>>) -> Result<NodeId, TapeError> {
        let value = self.value(x).reshaped(shape)?;
        let needs = self.needs(x);
        Ok(self.push(Op::Reshape(x), value, needs))
    }

    pub fn sum(&mut self, x: NodeId) -> NodeId {
        let total: f64 = self.value(x).data().iter().sum();
        let needs = self.needs(x);
        self.push(Op::Sum(x), Tensor::scalar(total), needs)
    }

    /// Weighted MSE against a constant target. `weight` entries are
    /// typically 0/1 validity flags; invalid entries contribute exactly
    /// zero to the loss and its gradient.
    pub fn mse(&mut self, x: NodeId, target: Tensor, weight: Tensor) -> Result<NodeId, TapeError> {
        let xv = self.value(x);
        xv.same_shape(&target)?;
        xv.same_shape(&weight)?;
        let weight_sum: f64 = weight.data().iter().sum();
        if weight_sum <= 0.0 {
            return Err(TapeError::EmptyMse);
        }
        let mut acc = 0.0;
        for ((&p, &t), &w) in xv.data().iter().zip(target.data()).zip(weight.data()) {
            if w != 0.0 {
                let d = p - t;
                acc += w * d * d;
            }
        }
        let value = Tensor::scalar(acc / weight_sum);
        let needs = self.needs(x);
        Ok(self.push(Op::Mse { target, weight, weight_sum, input: x }, value, needs))
    }

    /// Reverse sweep from a scalar loss. Returns one gradient slot per
    /// node; only nodes on a differentiable path are populated.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients, TapeError> {
        let loss_node = &self.nodes[loss.idx()];
        if !loss_node.value.is_scalar() {
            return Err(TapeError::NonScalarLoss(loss_node.value.shape().to_vec()));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[loss.idx()] = Some(Tensor::scalar(1.0));

        for idx in (0..=loss.idx()).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            match &node.op {
                Op::Leaf => {
                    grads[idx] = Some(g);
                    continue;
                }
                Op::MatMul(a, b) => {
                    if self.needs(*a) {
                        let da = g.matmul_nt(self.value(*b))?;
                        accumulate(&mut grads[a.idx()], da);
                    }
                    if self.needs(*b) {
                        let db = self.value(*a).matmul_tn(&g)?;
                        accumulate(&mut grads[b.idx()], db);
                    }
                }
                Op::Add(a, b) => {
                    if self.needs(*a) {
                        accumulate(&mut grads[a.idx()], g.clone());
                    }
                    if self.needs(*b) {
                        accumulate(&mut grads[b.idx()], g.clone());
                    }
                }
                Op::AddRow(x, bias) => {
                    if self.needs(*bias) {
                        let (m, n) = (g.rows(), g.cols());
                        let mut sums = vec![0.0; n];
                        for r in 0..m {
                            for (s, v) in sums.iter_mut().zip(g.row_slice(r)) {
                                *s += v;
                            }
                        }
                        accumulate(&mut grads[bias.idx()], Tensor::row(sums));
                    }
                    if self.needs(*x) {
                        accumulate(&mut grads[x.idx()], g);
                    }
                }
                Op::Mul(a, b) => {
                    if self.needs(*a) {
                        let da = g.zip_map(self.value(*b), |gv, bv| gv * bv)?;
                        accumulate(&mut grads[a.idx()], da);
                    }
                    if self.needs(*b) {
                        let db = g.zip_map(self.value(*a), |gv, av| gv * av)?;
                        accumulate(&mut grads[b.idx()], db);
                    }
                }
                Op::Relu(x) => {
                    let dx = g.zip_map(self.value(*x), |gv, xv| if xv > 0.0 { gv } else { 0.0 })?;
                    accumulate(&mut grads[x.idx()], dx);
                }
                Op::MaskMul(x, mask) => {
                    let dx = apply_mask_values(&g, mask).expect("mask validated at forward");
                    accumulate(&mut grads[x.idx()], dx);
                }
                Op::AdjMul(adj, x) => {
                    let cols = g.cols();
                    let mut out = vec![0.0; g.len()];
                    adj.mul_transpose_into(g.data(), cols, &mut out);
                    accumulate(&mut grads[x.idx()], Tensor::matrix(g.rows(), cols, out)?);
                }
                Op::Max(a, b) => {
                    let av = self.value(*a);
                    let bv = self.value(*b);
                    if self.needs(*a) {
                        let da = Tensor::from_vec(
                            g.shape().to_vec(),
                            g.data()
                                .iter()
                                .zip(av.data().iter().zip(bv.data()))
                                .map(|(&gv, (&x, &y))| if x >= y { gv } else { 0.0 })
                                .collect(),
                        )?;
                        accumulate(&mut grads[a.idx()], da);
                    }
                    if self.needs(*b) {
                        let db = Tensor::from_vec(
                            g.shape().to_vec(),
                            g.data()
                                .iter()
                                .zip(av.data().iter().zip(bv.data()))
                                .map(|(&gv, (&x, &y))| if x >= y { 0.0 } else { gv })
                                .collect(),
                        )?;
                        accumulate(&mut grads[b.idx()], db);
                    }
                }
                Op::Reshape(x) => {
                    let dx = g.reshaped(self.value(*x).shape().to_vec())?;
                    accumulate(&mut grads[x.idx()], dx);
                }
                Op::Sum(x) => {
                    let shape = self.value(*x).shape().to_vec();
                    accumulate(&mut grads[x.idx()], Tensor::filled(shape, g.item()));
                }
                Op::Mse { target, weight, weight_sum, input } => {
                    let gv = g.item();
                    let xv = self.value(*input);
                    let scale = 2.0 * gv / weight_sum;
                    let data = xv
                        .data()
                        .iter()
                        .zip(target.data())
                        .zip(weight.data())
                        .map(|((&p, &t), &w)| if w != 0.0 { scale * w * (p - t) } else { 0.0 })
                        .collect();
                    accumulate(&mut grads[input.idx()], Tensor::from_vec(xv.shape().to_vec(), data)?);
                }
            }
        }
        Ok(Gradients { grads })
    }
}

fn accumulate(slot: &mut Option<Tensor>, g: Tensor) {
    match slot {
        Some(acc) => acc.add_assign(&g),
        None => *slot = Some(g),
    }
}

/// Mask multiply used by both forward and backward. Returns None when
/// the mask shape neither matches nor row-broadcasts.
fn apply_mask_values(x: &Tensor, mask: &Tensor) -> Option<Tensor> {
    if x.shape() == mask.shape() {
        return Some(x.zip_map(mask, |a, b| a * b).expect("same shape"));
    }
    let [m, n] = *x.shape() else { return None };
    if mask.shape() == [m, 1] {
        let mut data = x.data().to_vec();
        for (r, &mv) in mask.data().iter().enumerate() {
            if mv == 1.0 {
                continue;
            }
            for d in data[r * n..(r + 1) * n].iter_mut() {
                *d *= mv;
            }
        }
        return Some(Tensor::matrix(m, n, data).expect("same size"));
    }
    None
}

/// Gradients indexed by tape node.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn wrt(&self, id: NodeId) -> Option<&Tensor> {
        self.grads.get(id.idx()).and_then(|g| g.as_ref())
    }

    /// Gradient of a parameter leaf; zero-filled when the loss does not
    /// depend on it (e.g. a masked-out path).
    pub fn wrt_or_zeros(&self, id: NodeId, shape: &[usize]) -> Tensor {
        match self.wrt(id) {
            Some(g) => g.clone(),
            None => Tensor::zeros(shape.to_vec()),
        }
    }
}

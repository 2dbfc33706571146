//! Reverse-mode automatic differentiation on a dynamically recorded tape.
//!
//! A [`Tape`] records one forward computation as a flat list of nodes. Each
//! op checks shapes eagerly and stores its output value, so the graph is
//! always evaluated; `backward` then walks the node list in reverse and
//! accumulates adjoints for every node that can influence the loss.
//!
//! Trainable tensors enter the graph through [`Tape::bind`], which registers
//! a whole [`ParamStore`] and reports gradients per store slot. Everything
//! else enters as a constant and receives no gradient. Gradients only flow
//! where they are needed: a node is marked differentiable exactly when one
//! of its parents is, and backward skips the rest.

use super::store::{ParamId, ParamStore};
use super::tensor::{self, Tensor, TensorError};
use std::sync::Arc;

/// Handle to a node on the tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(usize);

/// Per-block neighbourhood lists in CSR form, used by [`Tape::neighbor_agg`].
///
/// Blocks are stacked along the row axis: block `b` with `n_b` nodes owns
/// rows `base_b .. base_b + n_b` of the input matrix, and row `i` of the
/// output is the sum of the input rows listed as neighbours of `i`.
#[derive(Debug, Clone, Default)]
pub struct Neighborhoods {
    offsets: Vec<usize>,
    targets: Vec<usize>,
}

impl Neighborhoods {
    pub fn new() -> Neighborhoods {
        Neighborhoods {
            offsets: vec![0],
            targets: Vec::new(),
        }
    }

    /// Append one node whose neighbours are `targets`, given as absolute row
    /// indices into the stacked input.
    pub fn push_row(&mut self, targets: &[usize]) {
        self.targets.extend_from_slice(targets);
        self.offsets.push(self.targets.len());
    }

    pub fn rows(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn row(&self, i: usize) -> &[usize] {
        &self.targets[self.offsets[i]..self.offsets[i + 1]]
    }
}

enum Op {
    Leaf {
        grad_slot: Option<usize>,
    },
    MatMul(NodeId, NodeId),
    /// `A * B^T`, with `B` stored row-major as `n x k`.
    MatMulNT(NodeId, NodeId),
    Add(NodeId, NodeId),
    /// Broadcast a `1 x c` row over every row of the left operand.
    AddRow(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    /// Elementwise minimum; ties route the gradient to the left operand.
    Minimum(NodeId, NodeId),
    Scale(NodeId, f64),
    AddConst(NodeId),
    Square(NodeId),
    Log(NodeId),
    Exp(NodeId),
    Relu(NodeId),
    Tanh(NodeId),
    Softplus(NodeId),
    Clamp(NodeId, f64, f64),
    ConcatCols(NodeId, NodeId),
    SliceCols(NodeId, usize, usize),
    SumAll(NodeId),
    MeanAll(NodeId),
    MinAll(NodeId),
    SumRows(NodeId),
    NeighborAgg(NodeId, Arc<Neighborhoods>),
}

struct Node {
    value: Tensor,
    op: Op,
    diff: bool,
}

/// Floor applied inside `log` so that finite non-negative inputs cannot
/// produce `-inf`; inputs at or below the floor get the floor's derivative.
pub const LOG_FLOOR: f64 = 1e-12;

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    bound_params: Option<usize>,
}

/// Gradients for every slot of the bound [`ParamStore`], in slot order.
/// Slots the loss does not depend on hold `None` and mean a zero gradient.
pub struct ParamGrads {
    slots: Vec<Option<Tensor>>,
}

impl ParamGrads {
    pub fn slot(&self, slot: usize) -> Option<&Tensor> {
        self.slots[slot].as_ref()
    }

    pub fn get(&self, id: ParamId) -> Option<&Tensor> {
        self.slots[id.0].as_ref()
    }

    /// Gradient for one slot, materialising zeros for absent entries.
    pub fn dense(&self, store: &ParamStore, slot: usize) -> Tensor {
        match &self.slots[slot] {
            Some(g) => g.clone(),
            None => {
                let t = store.tensor_at(slot);
                Tensor::zeros(t.rows(), t.cols())
            }
        }
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }
}

impl Tape {
    pub fn new() -> Tape {
        Tape::default()
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, diff: bool) -> NodeId {
        let id = NodeId(self.nodes.len());
        self.nodes.push(Node { value, op, diff });
        id
    }

    fn diff(&self, id: NodeId) -> bool {
        self.nodes[id.0].diff
    }

    /// Add a non-trainable input.
    pub fn constant(&mut self, value: Tensor) -> NodeId {
        self.push(value, Op::Leaf { grad_slot: None }, false)
    }

    /// Register every tensor of `store` as a differentiable leaf. Returns
    /// node ids in slot order. A tape tracks gradients for one store only.
    pub fn bind(&mut self, store: &ParamStore) -> Result<Vec<NodeId>, TensorError> {
        if self.bound_params.is_some() {
            return Err(TensorError::StoreAlreadyBound);
        }
        self.bound_params = Some(store.len());
        let ids = (0..store.len())
            .map(|slot| {
                self.push(
                    store.tensor_at(slot).clone(),
                    Op::Leaf {
                        grad_slot: Some(slot),
                    },
                    true,
                )
            })
            .collect();
        Ok(ids)
    }

    /// Add every tensor of `store` as frozen constants (no gradients), e.g.
    /// target networks or critics inside the actor objective.
    pub fn freeze(&mut self, store: &ParamStore) -> Vec<NodeId> {
        (0..store.len())
            .map(|slot| self.constant(store.tensor_at(slot).clone()))
            .collect()
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, TensorError> {
        let v = tensor::matmul(self.value(a), self.value(b))?;
        let diff = self.diff(a) || self.diff(b);
        Ok(self.push(v, Op::MatMul(a, b), diff))
    }

    /// `a * b^T` with `b` stored as `n x k`; the natural orientation for
    /// weight matrices laid out `out_channels x in_channels`.
    pub fn matmul_nt(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, TensorError> {
        let v = tensor::matmul_nt(self.value(a), self.value(b))?;
        let diff = self.diff(a) || self.diff(b);
        Ok(self.push(v, Op::MatMulNT(a, b), diff))
    }

    fn zip_elementwise(
        &mut self,
        op_name: &'static str,
        a: NodeId,
        b: NodeId,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<NodeId, TensorError> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return Err(TensorError::ShapeMismatch {
                op: op_name,
                lhs: va.shape(),
                rhs: vb.shape(),
            });
        }
        let data = va
            .data()
            .iter()
            .zip(vb.data().iter())
            .map(|(&x, &y)| f(x, y))
            .collect();
        let v = Tensor::from_vec(va.rows(), va.cols(), data);
        let diff = self.diff(a) || self.diff(b);
        Ok(self.push(v, op, diff))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, TensorError> {
        self.zip_elementwise("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    /// `a + bias` where `bias` is `1 x c` and broadcast across rows of `a`.
    pub fn add_row(&mut self, a: NodeId, bias: NodeId) -> Result<NodeId, TensorError> {
        let (va, vb) = (self.value(a), self.value(bias));
        if vb.rows() != 1 || vb.cols() != va.cols() {
            return Err(TensorError::ShapeMismatch {
                op: "add_row",
                lhs: va.shape(),
                rhs: vb.shape(),
            });
        }
        let mut v = va.clone();
        let brow = vb.data();
        for r in 0..v.rows() {
            let row = &mut v.data_mut()[r * brow.len()..(r + 1) * brow.len()];
            for (x, b) in row.iter_mut().zip(brow.iter()) {
                *x += b;
            }
        }
        let diff = self.diff(a) || self.diff(bias);
        Ok(self.push(v, Op::AddRow(a, bias), diff))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, TensorError> {
        self.zip_elementwise("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, TensorError> {
        self.zip_elementwise("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    pub fn minimum(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, TensorError> {
        self.zip_elementwise("minimum", a, b, |x, y| x.min(y), Op::Minimum(a, b))
    }

    pub fn scale(&mut self, a: NodeId, s: f64) -> NodeId {
        let v = self.value(a).map(|x| s * x);
        let diff = self.diff(a);
        self.push(v, Op::Scale(a, s), diff)
    }

    pub fn add_const(&mut self, a: NodeId, c: f64) -> NodeId {
        let v = self.value(a).map(|x| x + c);
        let diff = self.diff(a);
        self.push(v, Op::AddConst(a), diff)
    }

    pub fn square(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(|x| x * x);
        let diff = self.diff(a);
        self.push(v, Op::Square(a), diff)
    }

    /// Natural log with a small floor (see [`LOG_FLOOR`]) so the op stays
    /// finite on non-negative input.
    pub fn log(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(|x| x.max(LOG_FLOOR).ln());
        let diff = self.diff(a);
        self.push(v, Op::Log(a), diff)
    }

    pub fn exp(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(f64::exp);
        let diff = self.diff(a);
        self.push(v, Op::Exp(a), diff)
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(|x| x.max(0.0));
        let diff = self.diff(a);
        self.push(v, Op::Relu(a), diff)
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(f64::tanh);
        let diff = self.diff(a);
        self.push(v, Op::Tanh(a), diff)
    }

    /// Numerically stable `ln(1 + e^x) = max(x, 0) + ln(1 + e^{-|x|})`.
    pub fn softplus(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(|x| x.max(0.0) + (-x.abs()).exp().ln_1p());
        let diff = self.diff(a);
        self.push(v, Op::Softplus(a), diff)
    }

    /// Clamp to `[lo, hi]`; the gradient passes only strictly inside.
    pub fn clamp(&mut self, a: NodeId, lo: f64, hi: f64) -> NodeId {
        let v = self.value(a).map(|x| x.clamp(lo, hi));
        let diff = self.diff(a);
        self.push(v, Op::Clamp(a, lo, hi), diff)
    }

    pub fn concat_cols(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, TensorError> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.rows() != vb.rows() {
            return Err(TensorError::ShapeMismatch {
                op: "concat_cols",
                lhs: va.shape(),
                rhs: vb.shape(),
            });
        }
        let (rows, ca, cb) = (va.rows(), va.cols(), vb.cols());
        let mut data = Vec::with_capacity(rows * (ca + cb));
        for r in 0..rows {
            data.extend_from_slice(va.row_slice(r));
            data.extend_from_slice(vb.row_slice(r));
        }
        let v = Tensor::from_vec(rows, ca + cb, data);
        let diff = self.diff(a) || self.diff(b);
        Ok(self.push(v, Op::ConcatCols(a, b), diff))
    }

    pub fn slice_cols(&mut self, a: NodeId, start: usize, end: usize) -> Result<NodeId, TensorError> {
        let va = self.value(a);
        if start >= end || end > va.cols() {
            return Err(TensorError::BadSlice {
                op: "slice_cols",
                start,
                end,
                cols: va.cols(),
            });
        }
        let rows = va.rows();
        let mut data = Vec::with_capacity(rows * (end - start));
        for r in 0..rows {
            data.extend_from_slice(&va.row_slice(r)[start..end]);
        }
        let v = Tensor::from_vec(rows, end - start, data);
        let diff = self.diff(a);
        Ok(self.push(v, Op::SliceCols(a, start, end), diff))
    }

    pub fn sum_all(&mut self, a: NodeId) -> NodeId {
        let v = Tensor::scalar(self.value(a).iter().sum());
        let diff = self.diff(a);
        self.push(v, Op::SumAll(a), diff)
    }

    pub fn mean_all(&mut self, a: NodeId) -> NodeId {
        let va = self.value(a);
        let v = Tensor::scalar(va.iter().sum::<f64>() / va.len() as f64);
        let diff = self.diff(a);
        self.push(v, Op::MeanAll(a), diff)
    }

    /// Minimum over all elements; the gradient goes to the first minimiser
    /// in row-major order.
    pub fn min_all(&mut self, a: NodeId) -> NodeId {
        let v = Tensor::scalar(self.value(a).iter().copied().fold(f64::INFINITY, f64::min));
        let diff = self.diff(a);
        self.push(v, Op::MinAll(a), diff)
    }

    /// Row-wise sum: `r x c -> r x 1`.
    pub fn sum_rows(&mut self, a: NodeId) -> NodeId {
        let va = self.value(a);
        let data = (0..va.rows())
            .map(|r| va.row_slice(r).iter().sum())
            .collect();
        let v = Tensor::from_vec(va.rows(), 1, data);
        let diff = self.diff(a);
        self.push(v, Op::SumRows(a), diff)
    }

    /// Graph aggregation: output row `i` is the sum of input rows listed in
    /// `adj.row(i)`. Nodes with no neighbours produce a zero row.
    pub fn neighbor_agg(
        &mut self,
        a: NodeId,
        adj: Arc<Neighborhoods>,
    ) -> Result<NodeId, TensorError> {
        let va = self.value(a);
        if adj.rows() != va.rows() {
            return Err(TensorError::AdjacencyMismatch {
                adj_rows: adj.rows(),
                input_rows: va.rows(),
            });
        }
        let cols = va.cols();
        let mut v = Tensor::zeros(va.rows(), cols);
        for i in 0..adj.rows() {
            for &j in adj.row(i) {
                let src = va.row_slice(j);
                let dst = &mut v.data_mut()[i * cols..(i + 1) * cols];
                for (d, s) in dst.iter_mut().zip(src.iter()) {
                    *d += s;
                }
            }
        }
        let diff = self.diff(a);
        Ok(self.push(v, Op::NeighborAgg(a, adj), diff))
    }

    /// Reverse pass from a scalar loss. Returns one gradient per slot of the
    /// store previously bound with [`Tape::bind`].
    pub fn backward(&self, loss: NodeId) -> Result<ParamGrads, TensorError> {
        let n_slots = self.bound_params.unwrap_or(0);
        let lv = self.value(loss);
        if lv.shape() != (1, 1) {
            return Err(TensorError::NotScalar {
                op: "backward",
                shape: lv.shape(),
            });
        }

        let mut adjoints: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        adjoints[loss.0] = Some(Tensor::scalar(1.0));
        let mut grads = ParamGrads {
            slots: (0..n_slots).map(|_| None).collect(),
        };

        for idx in (0..=loss.0).rev() {
            if !self.nodes[idx].diff {
                continue;
            }
            let Some(dy) = adjoints[idx].take() else {
                continue;
            };
            match &self.nodes[idx].op {
                Op::Leaf { grad_slot } => {
                    if let Some(slot) = grad_slot {
                        match &mut grads.slots[*slot] {
                            Some(g) => g.add_assign_scaled(&dy, 1.0),
                            g @ None => *g = Some(dy),
                        }
                    }
                }
                Op::MatMul(a, b) => {
                    if self.diff(*a) {
                        let da = tensor::matmul_nt(&dy, self.value(*b))?;
                        accumulate(&mut adjoints[a.0], da);
                    }
                    if self.diff(*b) {
                        let db = tensor::matmul_tn(self.value(*a), &dy)?;
                        accumulate(&mut adjoints[b.0], db);
                    }
                }
                Op::MatMulNT(a, b) => {
                    if self.diff(*a) {
                        let da = tensor::matmul(&dy, self.value(*b))?;
                        accumulate(&mut adjoints[a.0], da);
                    }
                    if self.diff(*b) {
                        let db = tensor::matmul_tn(&dy, self.value(*a))?;
                        accumulate(&mut adjoints[b.0], db);
                    }
                }
                Op::Add(a, b) => {
                    if self.diff(*a) {
                        accumulate(&mut adjoints[a.0], dy.clone());
                    }
                    if self.diff(*b) {
                        accumulate(&mut adjoints[b.0], dy);
                    }
                }
                Op::AddRow(a, bias) => {
                    if self.diff(*bias) {
                        let cols = dy.cols();
                        let mut db = Tensor::zeros(1, cols);
                        for r in 0..dy.rows() {
                            for (acc, g) in db.data_mut().iter_mut().zip(dy.row_slice(r)) {
                                *acc += g;
                            }
                        }
                        accumulate(&mut adjoints[bias.0], db);
                    }
                    if self.diff(*a) {
                        accumulate(&mut adjoints[a.0], dy);
                    }
                }
                Op::Sub(a, b) => {
                    if self.diff(*a) {
                        accumulate(&mut adjoints[a.0], dy.clone());
                    }
                    if self.diff(*b) {
                        accumulate(&mut adjoints[b.0], dy.map(|g| -g));
                    }
                }
                Op::Mul(a, b) => {
                    if self.diff(*a) {
                        let da = zip_map(&dy, self.value(*b), |g, y| g * y);
                        accumulate(&mut adjoints[a.0], da);
                    }
                    if self.diff(*b) {
                        let db = zip_map(&dy, self.value(*a), |g, x| g * x);
                        accumulate(&mut adjoints[b.0], db);
                    }
                }
                Op::Minimum(a, b) => {
                    let (va, vb) = (self.value(*a), self.value(*b));
                    if self.diff(*a) {
                        let da = zip3_map(&dy, va, vb, |g, x, y| if x <= y { g } else { 0.0 });
                        accumulate(&mut adjoints[a.0], da);
                    }
                    if self.diff(*b) {
                        let db = zip3_map(&dy, va, vb, |g, x, y| if x <= y { 0.0 } else { g });
                        accumulate(&mut adjoints[b.0], db);
                    }
                }
                Op::Scale(a, s) => {
                    let s = *s;
                    accumulate(&mut adjoints[a.0], dy.map(|g| s * g));
                }
                Op::AddConst(a) => accumulate(&mut adjoints[a.0], dy),
                Op::Square(a) => {
                    let da = zip_map(&dy, self.value(*a), |g, x| 2.0 * x * g);
                    accumulate(&mut adjoints[a.0], da);
                }
                Op::Log(a) => {
                    let da = zip_map(&dy, self.value(*a), |g, x| g / x.max(LOG_FLOOR));
                    accumulate(&mut adjoints[a.0], da);
                }
                Op::Exp(a) => {
                    let da = zip_map(&dy, self.value(NodeId(idx)), |g, y| g * y);
                    accumulate(&mut adjoints[a.0], da);
                }
                Op::Relu(a) => {
                    let da = zip_map(&dy, self.value(*a), |g, x| if x > 0.0 { g } else { 0.0 });
                    accumulate(&mut adjoints[a.0], da);
                }
                Op::Tanh(a) => {
                    let da = zip_map(&dy, self.value(NodeId(idx)), |g, y| g * (1.0 - y * y));
                    accumulate(&mut adjoints[a.0], da);
                }
                Op::Softplus(a) => {
                    // d/dx softplus = sigmoid(x), computed stably.
                    let da = zip_map(&dy, self.value(*a), |g, x| {
                        let s = if x >= 0.0 {
                            1.0 / (1.0 + (-x).exp())
                        } else {
                            let e = x.exp();
                            e / (1.0 + e)
                        };
                        g * s
                    });
                    accumulate(&mut adjoints[a.0], da);
                }
                Op::Clamp(a, lo, hi) => {
                    let (lo, hi) = (*lo, *hi);
                    let da = zip_map(&dy, self.value(*a), |g, x| {
                        if x > lo && x < hi {
                            g
                        } else {
                            0.0
                        }
                    });
                    accumulate(&mut adjoints[a.0], da);
                }
                Op::ConcatCols(a, b) => {
                    let (ca, cb) = (self.value(*a).cols(), self.value(*b).cols());
                    let rows = dy.rows();
                    if self.diff(*a) {
                        let mut da = Tensor::zeros(rows, ca);
                        for r in 0..rows {
                            da.data_mut()[r * ca..(r + 1) * ca]
                                .copy_from_slice(&dy.row_slice(r)[..ca]);
                        }
                        accumulate(&mut adjoints[a.0], da);
                    }
                    if self.diff(*b) {
                        let mut db = Tensor::zeros(rows, cb);
                        for r in 0..rows {
                            db.data_mut()[r * cb..(r + 1) * cb]
                                .copy_from_slice(&dy.row_slice(r)[ca..]);
                        }
                        accumulate(&mut adjoints[b.0], db);
                    }
                }
                Op::SliceCols(a, start, _end) => {
                    let va = self.value(*a);
                    let (rows, cols, width) = (va.rows(), va.cols(), dy.cols());
                    let mut da = Tensor::zeros(rows, cols);
                    for r in 0..rows {
                        da.data_mut()[r * cols + start..r * cols + start + width]
                            .copy_from_slice(dy.row_slice(r));
                    }
                    accumulate(&mut adjoints[a.0], da);
                }
                Op::SumAll(a) => {
                    let g = dy.item()?;
                    let va = self.value(*a);
                    let da = Tensor::from_vec(va.rows(), va.cols(), vec![g; va.len()]);
                    accumulate(&mut adjoints[a.0], da);
                }
                Op::MeanAll(a) => {
                    let va = self.value(*a);
                    let g = dy.item()? / va.len() as f64;
                    let da = Tensor::from_vec(va.rows(), va.cols(), vec![g; va.len()]);
                    accumulate(&mut adjoints[a.0], da);
                }
                Op::MinAll(a) => {
                    let va = self.value(*a);
                    let m = self.value(NodeId(idx)).item()?;
                    let mut da = Tensor::zeros(va.rows(), va.cols());
                    if let Some(pos) = va.iter().position(|&x| x == m) {
                        da.data_mut()[pos] = dy.item()?;
                    }
                    accumulate(&mut adjoints[a.0], da);
                }
                Op::SumRows(a) => {
                    let va = self.value(*a);
                    let (rows, cols) = va.shape();
                    let mut da = Tensor::zeros(rows, cols);
                    for r in 0..rows {
                        let g = dy.get(r, 0);
                        for x in &mut da.data_mut()[r * cols..(r + 1) * cols] {
                            *x = g;
                        }
                    }
                    accumulate(&mut adjoints[a.0], da);
                }
                Op::NeighborAgg(a, adj) => {
                    let cols = dy.cols();
                    let mut da = Tensor::zeros(dy.rows(), cols);
                    for i in 0..adj.rows() {
                        for &j in adj.row(i) {
                            let src = dy.row_slice(i);
                            let dst = &mut da.data_mut()[j * cols..(j + 1) * cols];
                            for (d, s) in dst.iter_mut().zip(src.iter()) {
                                *d += s;
                            }
                        }
                    }
                    accumulate(&mut adjoints[a.0], da);
                }
            }
        }
        Ok(grads)
    }
}

fn accumulate(slot: &mut Option<Tensor>, g: Tensor) {
    match slot {
        Some(acc) => acc.add_assign_scaled(&g, 1.0),
        None => *slot = Some(g),
    }
}

fn zip_map(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    debug_assert_eq!(a.shape(), b.shape());
    let data = a
        .data()
        .iter()
        .zip(b.data().iter())
        .map(|(&x, &y)| f(x, y))
        .collect();
    Tensor::from_vec(a.rows(), a.cols(), data)
}

fn zip3_map(a: &Tensor, b: &Tensor, c: &Tensor, f: impl Fn(f64, f64, f64) -> f64) -> Tensor {
    let data = a
        .data()
        .iter()
        .zip(b.data().iter())
        .zip(c.data().iter())
        .map(|((&x, &y), &z)| f(x, y, z))
        .collect();
    Tensor::from_vec(a.rows(), a.cols(), data)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store_with(name: &str, t: Tensor) -> (ParamStore, ParamId) {
        let mut s = ParamStore::new();
        let id = s.insert(name, t).unwrap();
        (s, id)
    }

    #[test]
    fn relu_clips_negatives() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::row(vec![-1.0, 0.0, 2.0]));
        let y = tape.relu(x);
        assert_eq!(tape.value(y).data(), &[0.0, 0.0, 2.0]);
    }

    #[test]
    fn grad_of_sum_matmul_is_input_outer_product() {
        // loss = sum(W x) with W 2x2, x = [1, 2]^T; dL/dW = [[1,2],[1,2]]
        let (store, wid) = store_with("w", Tensor::from_vec(2, 2, vec![1.0, 0.0, 0.0, 1.0]));
        let mut tape = Tape::new();
        let ids = tape.bind(&store).unwrap();
        let x = tape.constant(Tensor::from_vec(2, 1, vec![1.0, 2.0]));
        let wx = tape.matmul(ids[wid.0], x).unwrap();
        let loss = tape.sum_all(wx);
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.get(wid).unwrap().data(), &[1.0, 2.0, 1.0, 2.0]);
    }

    #[test]
    fn untouched_param_has_no_gradient() {
        let mut store = ParamStore::new();
        let used = store.insert("used", Tensor::scalar(3.0)).unwrap();
        let unused = store.insert("unused", Tensor::scalar(5.0)).unwrap();
        let mut tape = Tape::new();
        let ids = tape.bind(&store).unwrap();
        let sq = tape.square(ids[used.0]);
        let loss = tape.sum_all(sq);
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.get(used).unwrap().item().unwrap(), 6.0);
        assert!(grads.get(unused).is_none());
        assert_eq!(grads.dense(&store, unused.0).item().unwrap(), 0.0);
    }

    #[test]
    fn backward_rejects_non_scalar_loss() {
        let (store, _) = store_with("w", Tensor::row(vec![1.0, 2.0]));
        let mut tape = Tape::new();
        let ids = tape.bind(&store).unwrap();
        let doubled = tape.scale(ids[0], 2.0);
        assert!(matches!(
            tape.backward(doubled),
            Err(TensorError::NotScalar { .. })
        ));
    }

    #[test]
    fn fanout_accumulates_adjoints() {
        // loss = sum(x*x + 3x) => dL/dx = 2x + 3
        let (store, xid) = store_with("x", Tensor::row(vec![2.0, -1.0]));
        let mut tape = Tape::new();
        let ids = tape.bind(&store).unwrap();
        let x = ids[xid.0];
        let sq = tape.mul(x, x).unwrap();
        let tri = tape.scale(x, 3.0);
        let sum = tape.add(sq, tri).unwrap();
        let loss = tape.sum_all(sum);
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.get(xid).unwrap().data(), &[7.0, 1.0]);
    }

    #[test]
    fn minimum_routes_gradient_to_smaller_side() {
        let mut store = ParamStore::new();
        let a = store.insert("a", Tensor::row(vec![1.0, 5.0, 2.0])).unwrap();
        let b = store.insert("b", Tensor::row(vec![3.0, 4.0, 2.0])).unwrap();
        let mut tape = Tape::new();
        let ids = tape.bind(&store).unwrap();
        let m = tape.minimum(ids[a.0], ids[b.0]).unwrap();
        let loss = tape.sum_all(m);
        let grads = tape.backward(loss).unwrap();
        // tie in the last element goes to `a`
        assert_eq!(grads.get(a).unwrap().data(), &[1.0, 0.0, 1.0]);
        assert_eq!(grads.get(b).unwrap().data(), &[0.0, 1.0, 0.0]);
    }

    #[test]
    fn neighbor_agg_sums_listed_rows() {
        let mut adj = Neighborhoods::new();
        adj.push_row(&[1, 2]);
        adj.push_row(&[0]);
        adj.push_row(&[]);
        let mut tape = Tape::new();
        let h = tape.constant(Tensor::from_vec(3, 2, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]));
        let agg = tape.neighbor_agg(h, Arc::new(adj)).unwrap();
        assert_eq!(tape.value(agg).data(), &[8.0, 10.0, 1.0, 2.0, 0.0, 0.0]);
    }

    #[test]
    fn concat_and_slice_round_trip() {
        let mut tape = Tape::new();
        let a = tape.constant(Tensor::from_vec(2, 2, vec![1.0, 2.0, 3.0, 4.0]));
        let b = tape.constant(Tensor::from_vec(2, 1, vec![9.0, 8.0]));
        let cat = tape.concat_cols(a, b).unwrap();
        assert_eq!(tape.value(cat).data(), &[1.0, 2.0, 9.0, 3.0, 4.0, 8.0]);
        let back = tape.slice_cols(cat, 2, 3).unwrap();
        assert_eq!(tape.value(back).data(), &[9.0, 8.0]);
    }

    #[test]
    fn log_floor_keeps_zero_input_finite() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::row(vec![0.0, 1.0]));
        let y = tape.log(x);
        assert!(tape.value(y).is_finite());
        assert_eq!(tape.value(y).data()[1], 0.0);
    }

    #[test]
    fn forward_values_are_deterministic() {
        let run = || {
            let mut tape = Tape::new();
            let x = tape.constant(Tensor::row(vec![0.3, -1.7, 2.9]));
            let t = tape.tanh(x);
            let s = tape.softplus(t);
            let e = tape.exp(s);
            let m = tape.mean_all(e);
            tape.value(m).item().unwrap()
        };
        let a = run();
        let b = run();
        assert_eq!(a.to_bits(), b.to_bits());
    }
}

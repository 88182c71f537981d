//! Reverse-mode automatic differentiation on a flat tape.
//!
//! Tensors are nodes in an append-only arena; an operation records its parent
//! ids, so the graph is acyclic by construction and a single reverse sweep over
//! the arena visits nodes in reverse topological order. All values are `f64`
//! and every loop runs in a fixed order, so forward values and gradients are
//! bitwise reproducible.
//!
//! Each backward call computes the full gradient of one scalar into scratch
//! buffers and then adds the result into the persistent per-node accumulators,
//! so two identical backward calls leave exactly twice the gradient of one.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::math;

/// Handle to a node in one [`Graph`]. Handles are only meaningful on the graph
/// that issued them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TensorId(pub(crate) usize);

impl TensorId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum GraphError {
    /// `data.len()` disagrees with the product of `shape`.
    DataLen { expected: usize, got: usize },
    /// Two operand shapes are incompatible for the named primitive.
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    /// An operand has a rank or extent the primitive cannot accept.
    BadOperand { op: &'static str, shape: Vec<usize> },
    /// Row-slice bounds out of range.
    SliceBounds {
        start: usize,
        end: usize,
        rows: usize,
    },
    /// Embedding id outside the table.
    IndexOutOfRange { index: usize, bound: usize },
    /// Additive softmax mask length does not match the row width.
    MaskLen { expected: usize, got: usize },
    /// `backward` called on a tensor that is not a scalar.
    NonScalarLoss { shape: Vec<usize> },
}

impl fmt::Display for GraphError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GraphError::DataLen { expected, got } => {
                write!(f, "tensor data length {got} does not match shape product {expected}")
            }
            GraphError::ShapeMismatch { op, lhs, rhs } => {
                write!(f, "{op}: operand shapes {lhs:?} and {rhs:?} are incompatible")
            }
            GraphError::BadOperand { op, shape } => {
                write!(f, "{op}: unsupported operand shape {shape:?}")
            }
            GraphError::SliceBounds { start, end, rows } => {
                write!(f, "slice_rows: range {start}..{end} out of bounds for {rows} rows")
            }
            GraphError::IndexOutOfRange { index, bound } => {
                write!(f, "embed: id {index} out of range for table with {bound} rows")
            }
            GraphError::MaskLen { expected, got } => {
                write!(f, "softmax_rows: mask length {got} does not match row width {expected}")
            }
            GraphError::NonScalarLoss { shape } => {
                write!(f, "backward: expected a scalar, got shape {shape:?}")
            }
        }
    }
}

impl core::error::Error for GraphError {}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Add(TensorId, TensorId),
    Sub(TensorId, TensorId),
    Mul(TensorId, TensorId),
    MatMul(TensorId, TensorId),
    Transpose(TensorId),
    /// `[.., c] + [c]`, broadcast over leading dims.
    AddBias(TensorId, TensorId),
    /// `[.., c] * [c]`, broadcast over leading dims.
    MulBias(TensorId, TensorId),
    Scale(TensorId, f64),
    AddScalar(TensorId),
    Clamp(TensorId, f64, f64),
    Tanh(TensorId),
    Sigmoid(TensorId),
    Exp(TensorId),
    Ln(TensorId),
    Gelu(TensorId),
    /// Row-wise softmax over the last axis. Any additive mask is folded into
    /// the stored activations at record time; backward needs only those.
    SoftmaxRows(TensorId),
    /// Row-wise standardization over the last axis: `(x - mean) / sqrt(var + eps)`.
    Normalize(TensorId, f64),
    /// Concatenation along the last axis.
    ConcatCols(Vec<TensorId>),
    SliceRows(TensorId, usize, usize),
    Sum(TensorId),
    Mean(TensorId),
    /// Row gather from an embedding table; ids are constants.
    Embed(TensorId, Vec<usize>),
}

#[derive(Debug)]
struct Node {
    op: Op,
    shape: Vec<usize>,
    data: Vec<f64>,
    grad: Option<Vec<f64>>,
    requires_grad: bool,
    retain: bool,
}

/// Append-only computation tape.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

/// Last-axis extent and the number of "rows" when a tensor is viewed as a
/// matrix over its last axis.
fn row_view(op: &'static str, shape: &[usize]) -> Result<(usize, usize), GraphError> {
    let cols = *shape.last().ok_or(GraphError::BadOperand {
        op,
        shape: shape.to_vec(),
    })?;
    if cols == 0 {
        return Err(GraphError::BadOperand {
            op,
            shape: shape.to_vec(),
        });
    }
    Ok((numel(shape) / cols, cols))
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)
const GELU_A: f64 = 0.044_715;

fn gelu_forward(x: f64) -> f64 {
    let u = GELU_C * (x + GELU_A * x * x * x);
    0.5 * x * (1.0 + math::tanh(u))
}

fn gelu_derivative(x: f64) -> f64 {
    let u = GELU_C * (x + GELU_A * x * x * x);
    let t = math::tanh(u);
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * x * x)
}

/// Shared by forward and backward so both see identical row statistics.
fn row_stats(row: &[f64], eps: f64) -> (f64, f64) {
    let n = row.len() as f64;
    let mut mean = 0.0;
    for &v in row {
        mean += v;
    }
    mean /= n;
    let mut var = 0.0;
    for &v in row {
        let d = v - mean;
        var += d * d;
    }
    var /= n;
    (mean, math::sqrt(var + eps))
}

impl Graph {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn shape(&self, id: TensorId) -> &[usize] {
        &self.nodes[id.0].shape
    }

    pub fn data(&self, id: TensorId) -> &[f64] {
        &self.nodes[id.0].data
    }

    /// Value of a single-element tensor.
    pub fn scalar_value(&self, id: TensorId) -> f64 {
        debug_assert_eq!(self.nodes[id.0].data.len(), 1);
        self.nodes[id.0].data[0]
    }

    pub fn requires_grad(&self, id: TensorId) -> bool {
        self.nodes[id.0].requires_grad
    }

    /// Accumulated gradient, present after `backward` for trainable leaves and
    /// explicitly retained tensors.
    pub fn grad(&self, id: TensorId) -> Option<&[f64]> {
        self.nodes[id.0].grad.as_deref()
    }

    /// Keep the gradient of a non-leaf tensor after backward. No-op on
    /// trainable leaves, which are always retained.
    pub fn retain_grad(&mut self, id: TensorId) {
        self.nodes[id.0].retain = true;
    }

    /// Drop every persistent gradient accumulator.
    pub fn clear_grads(&mut self) {
        for node in &mut self.nodes {
            node.grad = None;
        }
    }

    fn push(&mut self, op: Op, shape: Vec<usize>, data: Vec<f64>, requires_grad: bool) -> TensorId {
        debug_assert_eq!(numel(&shape), data.len());
        let id = TensorId(self.nodes.len());
        self.nodes.push(Node {
            op,
            shape,
            data,
            grad: None,
            requires_grad,
            retain: false,
        });
        id
    }

    fn any_requires(&self, ids: &[TensorId]) -> bool {
        ids.iter().any(|id| self.nodes[id.0].requires_grad)
    }

    // ── Construction ────────────────────────────────────────────────────────

    pub fn leaf(
        &mut self,
        data: Vec<f64>,
        shape: Vec<usize>,
        requires_grad: bool,
    ) -> Result<TensorId, GraphError> {
        let expected = numel(&shape);
        if data.len() != expected {
            return Err(GraphError::DataLen {
                expected,
                got: data.len(),
            });
        }
        Ok(self.push(Op::Leaf, shape, data, requires_grad))
    }

    pub fn constant(&mut self, data: Vec<f64>, shape: Vec<usize>) -> Result<TensorId, GraphError> {
        self.leaf(data, shape, false)
    }

    pub fn scalar(&mut self, value: f64) -> TensorId {
        self.push(Op::Leaf, vec![1], vec![value], false)
    }

    // ── Elementwise binary ──────────────────────────────────────────────────

    fn zip_op(
        &mut self,
        op_name: &'static str,
        a: TensorId,
        b: TensorId,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<TensorId, GraphError> {
        if self.nodes[a.0].shape != self.nodes[b.0].shape {
            return Err(GraphError::ShapeMismatch {
                op: op_name,
                lhs: self.nodes[a.0].shape.clone(),
                rhs: self.nodes[b.0].shape.clone(),
            });
        }
        let data = self.nodes[a.0]
            .data
            .iter()
            .zip(&self.nodes[b.0].data)
            .map(|(&x, &y)| f(x, y))
            .collect();
        let shape = self.nodes[a.0].shape.clone();
        let rg = self.any_requires(&[a, b]);
        Ok(self.push(op, shape, data, rg))
    }

    pub fn add(&mut self, a: TensorId, b: TensorId) -> Result<TensorId, GraphError> {
        self.zip_op("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: TensorId, b: TensorId) -> Result<TensorId, GraphError> {
        self.zip_op("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: TensorId, b: TensorId) -> Result<TensorId, GraphError> {
        self.zip_op("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    // ── Matrix ops ──────────────────────────────────────────────────────────

    fn rank2(&self, op: &'static str, id: TensorId) -> Result<(usize, usize), GraphError> {
        let shape = &self.nodes[id.0].shape;
        if shape.len() != 2 {
            return Err(GraphError::BadOperand {
                op,
                shape: shape.clone(),
            });
        }
        Ok((shape[0], shape[1]))
    }

    pub fn matmul(&mut self, a: TensorId, b: TensorId) -> Result<TensorId, GraphError> {
        let (m, k) = self.rank2("matmul", a)?;
        let (k2, n) = self.rank2("matmul", b)?;
        if k != k2 {
            return Err(GraphError::ShapeMismatch {
                op: "matmul",
                lhs: self.nodes[a.0].shape.clone(),
                rhs: self.nodes[b.0].shape.clone(),
            });
        }
        let mut data = vec![0.0; m * n];
        {
            let lhs = &self.nodes[a.0].data;
            let rhs = &self.nodes[b.0].data;
            for i in 0..m {
                for l in 0..k {
                    let x = lhs[i * k + l];
                    let row = &rhs[l * n..(l + 1) * n];
                    let out = &mut data[i * n..(i + 1) * n];
                    for j in 0..n {
                        out[j] += x * row[j];
                    }
                }
            }
        }
        let rg = self.any_requires(&[a, b]);
        Ok(self.push(Op::MatMul(a, b), vec![m, n], data, rg))
    }

    pub fn transpose(&mut self, a: TensorId) -> Result<TensorId, GraphError> {
        let (r, c) = self.rank2("transpose", a)?;
        let src = &self.nodes[a.0].data;
        let mut data = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                data[j * r + i] = src[i * c + j];
            }
        }
        let rg = self.nodes[a.0].requires_grad;
        Ok(self.push(Op::Transpose(a), vec![c, r], data, rg))
    }

    // ── Broadcast ops ───────────────────────────────────────────────────────

    fn bias_op(
        &mut self,
        op_name: &'static str,
        x: TensorId,
        b: TensorId,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<TensorId, GraphError> {
        let (_, cols) = row_view(op_name, &self.nodes[x.0].shape)?;
        let bias_shape = &self.nodes[b.0].shape;
        if bias_shape.len() != 1 || bias_shape[0] != cols {
            return Err(GraphError::ShapeMismatch {
                op: op_name,
                lhs: self.nodes[x.0].shape.clone(),
                rhs: bias_shape.clone(),
            });
        }
        let bias = &self.nodes[b.0].data;
        let data = self.nodes[x.0]
            .data
            .iter()
            .enumerate()
            .map(|(k, &v)| f(v, bias[k % cols]))
            .collect();
        let shape = self.nodes[x.0].shape.clone();
        let rg = self.any_requires(&[x, b]);
        Ok(self.push(op, shape, data, rg))
    }

    /// `x + b` with `b` broadcast along the last axis.
    pub fn add_bias(&mut self, x: TensorId, b: TensorId) -> Result<TensorId, GraphError> {
        self.bias_op("add_bias", x, b, |v, w| v + w, Op::AddBias(x, b))
    }

    /// `x * b` with `b` broadcast along the last axis.
    pub fn mul_bias(&mut self, x: TensorId, b: TensorId) -> Result<TensorId, GraphError> {
        self.bias_op("mul_bias", x, b, |v, w| v * w, Op::MulBias(x, b))
    }

    // ── Elementwise unary ───────────────────────────────────────────────────

    fn map_op(
        &mut self,
        x: TensorId,
        f: impl Fn(f64) -> f64,
        op: Op,
    ) -> TensorId {
        let data = self.nodes[x.0].data.iter().map(|&v| f(v)).collect();
        let shape = self.nodes[x.0].shape.clone();
        let rg = self.nodes[x.0].requires_grad;
        self.push(op, shape, data, rg)
    }

    pub fn scale(&mut self, x: TensorId, c: f64) -> TensorId {
        self.map_op(x, |v| c * v, Op::Scale(x, c))
    }

    pub fn add_scalar(&mut self, x: TensorId, c: f64) -> TensorId {
        self.map_op(x, |v| v + c, Op::AddScalar(x))
    }

    pub fn clamp(&mut self, x: TensorId, lo: f64, hi: f64) -> TensorId {
        self.map_op(x, |v| v.clamp(lo, hi), Op::Clamp(x, lo, hi))
    }

    pub fn tanh(&mut self, x: TensorId) -> TensorId {
        self.map_op(x, math::tanh, Op::Tanh(x))
    }

    pub fn sigmoid(&mut self, x: TensorId) -> TensorId {
        self.map_op(x, math::sigmoid, Op::Sigmoid(x))
    }

    pub fn exp(&mut self, x: TensorId) -> TensorId {
        self.map_op(x, math::exp, Op::Exp(x))
    }

    pub fn ln(&mut self, x: TensorId) -> TensorId {
        self.map_op(x, math::ln, Op::Ln(x))
    }

    pub fn gelu(&mut self, x: TensorId) -> TensorId {
        self.map_op(x, gelu_forward, Op::Gelu(x))
    }

    // ── Row-wise ops ────────────────────────────────────────────────────────

    /// Row-wise softmax over the last axis. `mask`, when present, is added to
    /// every row before normalization and carries no gradient; entries at
    /// strongly negative mask positions underflow to exactly zero weight.
    pub fn softmax_rows(
        &mut self,
        x: TensorId,
        mask: Option<&[f64]>,
    ) -> Result<TensorId, GraphError> {
        let (rows, cols) = row_view("softmax_rows", &self.nodes[x.0].shape)?;
        if let Some(m) = mask {
            if m.len() != cols {
                return Err(GraphError::MaskLen {
                    expected: cols,
                    got: m.len(),
                });
            }
        }
        let src = &self.nodes[x.0].data;
        let mut data = vec![0.0; rows * cols];
        let mut row_buf = vec![0.0; cols];
        for r in 0..rows {
            let row = &src[r * cols..(r + 1) * cols];
            for j in 0..cols {
                row_buf[j] = row[j] + mask.map_or(0.0, |m| m[j]);
            }
            let mut max = f64::NEG_INFINITY;
            for &v in row_buf.iter() {
                if v > max {
                    max = v;
                }
            }
            let mut sum = 0.0;
            let out = &mut data[r * cols..(r + 1) * cols];
            for j in 0..cols {
                let e = math::exp(row_buf[j] - max);
                out[j] = e;
                sum += e;
            }
            for v in out.iter_mut() {
                *v /= sum;
            }
        }
        let shape = self.nodes[x.0].shape.clone();
        let rg = self.nodes[x.0].requires_grad;
        Ok(self.push(Op::SoftmaxRows(x), shape, data, rg))
    }

    /// Row-wise standardization over the last axis.
    pub fn normalize(&mut self, x: TensorId, eps: f64) -> Result<TensorId, GraphError> {
        let (rows, cols) = row_view("normalize", &self.nodes[x.0].shape)?;
        let src = &self.nodes[x.0].data;
        let mut data = vec![0.0; rows * cols];
        for r in 0..rows {
            let row = &src[r * cols..(r + 1) * cols];
            let (mean, denom) = row_stats(row, eps);
            let out = &mut data[r * cols..(r + 1) * cols];
            for j in 0..cols {
                out[j] = (row[j] - mean) / denom;
            }
        }
        let shape = self.nodes[x.0].shape.clone();
        let rg = self.nodes[x.0].requires_grad;
        Ok(self.push(Op::Normalize(x, eps), shape, data, rg))
    }

    // ── Shape ops ───────────────────────────────────────────────────────────

    /// Concatenate along the last axis. All inputs must share rank and leading
    /// dimensions.
    pub fn concat_cols(&mut self, parts: &[TensorId]) -> Result<TensorId, GraphError> {
        let first = *parts.first().ok_or(GraphError::BadOperand {
            op: "concat_cols",
            shape: Vec::new(),
        })?;
        let lead = {
            let s = &self.nodes[first.0].shape;
            if s.is_empty() {
                return Err(GraphError::BadOperand {
                    op: "concat_cols",
                    shape: s.clone(),
                });
            }
            s[..s.len() - 1].to_vec()
        };
        let mut widths = Vec::with_capacity(parts.len());
        let mut total = 0usize;
        for &p in parts {
            let s = &self.nodes[p.0].shape;
            if s.len() != lead.len() + 1 || s[..s.len() - 1] != lead[..] {
                return Err(GraphError::ShapeMismatch {
                    op: "concat_cols",
                    lhs: self.nodes[first.0].shape.clone(),
                    rhs: s.clone(),
                });
            }
            widths.push(s[s.len() - 1]);
            total += s[s.len() - 1];
        }
        let rows: usize = lead.iter().product();
        let mut data = vec![0.0; rows * total];
        let mut offset = 0usize;
        for (idx, &p) in parts.iter().enumerate() {
            let w = widths[idx];
            let src = &self.nodes[p.0].data;
            for r in 0..rows {
                data[r * total + offset..r * total + offset + w]
                    .copy_from_slice(&src[r * w..(r + 1) * w]);
            }
            offset += w;
        }
        let mut shape = lead;
        shape.push(total);
        let rg = self.any_requires(parts);
        Ok(self.push(Op::ConcatCols(parts.to_vec()), shape, data, rg))
    }

    /// Rows `start..end` along the first axis.
    pub fn slice_rows(
        &mut self,
        x: TensorId,
        start: usize,
        end: usize,
    ) -> Result<TensorId, GraphError> {
        let shape = &self.nodes[x.0].shape;
        if shape.is_empty() {
            return Err(GraphError::BadOperand {
                op: "slice_rows",
                shape: shape.clone(),
            });
        }
        let rows = shape[0];
        if start > end || end > rows {
            return Err(GraphError::SliceBounds { start, end, rows });
        }
        let stride: usize = shape[1..].iter().product();
        let data = self.nodes[x.0].data[start * stride..end * stride].to_vec();
        let mut out_shape = shape.clone();
        out_shape[0] = end - start;
        let rg = self.nodes[x.0].requires_grad;
        Ok(self.push(Op::SliceRows(x, start, end), out_shape, data, rg))
    }

    // ── Reductions ──────────────────────────────────────────────────────────

    pub fn sum(&mut self, x: TensorId) -> TensorId {
        let mut total = 0.0;
        for &v in &self.nodes[x.0].data {
            total += v;
        }
        let rg = self.nodes[x.0].requires_grad;
        self.push(Op::Sum(x), vec![1], vec![total], rg)
    }

    pub fn mean(&mut self, x: TensorId) -> TensorId {
        let n = self.nodes[x.0].data.len().max(1) as f64;
        let mut total = 0.0;
        for &v in &self.nodes[x.0].data {
            total += v;
        }
        let rg = self.nodes[x.0].requires_grad;
        self.push(Op::Mean(x), vec![1], vec![total / n], rg)
    }

    // ── Lookup ──────────────────────────────────────────────────────────────

    /// Gather rows of `table` (shape `[v, d]`) by id; output is `[ids.len(), d]`.
    pub fn embed(&mut self, table: TensorId, ids: &[usize]) -> Result<TensorId, GraphError> {
        let (v, d) = self.rank2("embed", table)?;
        for &id in ids {
            if id >= v {
                return Err(GraphError::IndexOutOfRange { index: id, bound: v });
            }
        }
        let src = &self.nodes[table.0].data;
        let mut data = vec![0.0; ids.len() * d];
        for (t, &id) in ids.iter().enumerate() {
            data[t * d..(t + 1) * d].copy_from_slice(&src[id * d..(id + 1) * d]);
        }
        let rg = self.nodes[table.0].requires_grad;
        Ok(self.push(Op::Embed(table, ids.to_vec()), vec![ids.len(), d], data, rg))
    }

    // ── Backward ────────────────────────────────────────────────────────────

    /// Reverse sweep from a scalar. Gradients land in the persistent
    /// accumulators of trainable leaves and retained tensors, adding to
    /// whatever previous backward calls left there.
    pub fn backward(&mut self, loss: TensorId) -> Result<(), GraphError> {
        if self.nodes[loss.0].data.len() != 1 {
            return Err(GraphError::NonScalarLoss {
                shape: self.nodes[loss.0].shape.clone(),
            });
        }
        let upto = loss.0 + 1;
        let mut scratch: Vec<Option<Vec<f64>>> = vec![None; upto];
        if self.nodes[loss.0].requires_grad || self.keeps_grad(loss.0) {
            scratch[loss.0] = Some(vec![1.0]);
        }
        for i in (0..upto).rev() {
            let Some(up) = scratch[i].take() else {
                continue;
            };
            if self.keeps_grad(i) {
                accumulate(&mut self.nodes[i].grad, &up);
            }
            self.propagate(i, &up, &mut scratch);
        }
        // Retained tensors the loss never reached still expose a gradient: zero.
        for i in 0..self.nodes.len() {
            if self.keeps_grad(i) && self.nodes[i].grad.is_none() {
                let n = self.nodes[i].data.len();
                self.nodes[i].grad = Some(vec![0.0; n]);
            }
        }
        Ok(())
    }

    fn keeps_grad(&self, i: usize) -> bool {
        let node = &self.nodes[i];
        node.retain || (node.requires_grad && matches!(node.op, Op::Leaf))
    }

    fn wants(&self, id: TensorId) -> bool {
        self.nodes[id.0].requires_grad
    }

    fn propagate(&self, i: usize, up: &[f64], scratch: &mut [Option<Vec<f64>>]) {
        // Zeroed (or existing) scratch buffer for a parent.
        macro_rules! buf {
            ($id:expr) => {{
                let n = self.nodes[$id.0].data.len();
                scratch[$id.0]
                    .get_or_insert_with(|| vec![0.0; n])
                    .as_mut_slice()
            }};
        }
        match &self.nodes[i].op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                if self.wants(*a) {
                    let g = buf!(a);
                    for (d, &u) in g.iter_mut().zip(up) {
                        *d += u;
                    }
                }
                if self.wants(*b) {
                    let g = buf!(b);
                    for (d, &u) in g.iter_mut().zip(up) {
                        *d += u;
                    }
                }
            }
            Op::Sub(a, b) => {
                if self.wants(*a) {
                    let g = buf!(a);
                    for (d, &u) in g.iter_mut().zip(up) {
                        *d += u;
                    }
                }
                if self.wants(*b) {
                    let g = buf!(b);
                    for (d, &u) in g.iter_mut().zip(up) {
                        *d -= u;
                    }
                }
            }
            Op::Mul(a, b) => {
                if self.wants(*a) {
                    let other = &self.nodes[b.0].data;
                    let g = buf!(a);
                    for k in 0..up.len() {
                        g[k] += up[k] * other[k];
                    }
                }
                if self.wants(*b) {
                    let other = &self.nodes[a.0].data;
                    let g = buf!(b);
                    for k in 0..up.len() {
                        g[k] += up[k] * other[k];
                    }
                }
            }
            Op::MatMul(a, b) => {
                let (m, k) = (self.nodes[a.0].shape[0], self.nodes[a.0].shape[1]);
                let n = self.nodes[b.0].shape[1];
                if self.wants(*a) {
                    let rhs = &self.nodes[b.0].data;
                    let g = buf!(a);
                    for i2 in 0..m {
                        for l in 0..k {
                            let mut s = 0.0;
                            for j in 0..n {
                                s += up[i2 * n + j] * rhs[l * n + j];
                            }
                            g[i2 * k + l] += s;
                        }
                    }
                }
                if self.wants(*b) {
                    let lhs = &self.nodes[a.0].data;
                    let g = buf!(b);
                    for l in 0..k {
                        for j in 0..n {
                            let mut s = 0.0;
                            for i2 in 0..m {
                                s += lhs[i2 * k + l] * up[i2 * n + j];
                            }
                            g[l * n + j] += s;
                        }
                    }
                }
            }
            Op::Transpose(a) => {
                if self.wants(*a) {
                    let (r, c) = (self.nodes[a.0].shape[0], self.nodes[a.0].shape[1]);
                    let g = buf!(a);
                    for i2 in 0..r {
                        for j in 0..c {
                            g[i2 * c + j] += up[j * r + i2];
                        }
                    }
                }
            }
            Op::AddBias(x, b) => {
                let cols = self.nodes[b.0].data.len();
                if self.wants(*x) {
                    let g = buf!(x);
                    for (d, &u) in g.iter_mut().zip(up) {
                        *d += u;
                    }
                }
                if self.wants(*b) {
                    let g = buf!(b);
                    for (k, &u) in up.iter().enumerate() {
                        g[k % cols] += u;
                    }
                }
            }
            Op::MulBias(x, b) => {
                let cols = self.nodes[b.0].data.len();
                if self.wants(*x) {
                    let bias = &self.nodes[b.0].data;
                    let g = buf!(x);
                    for (k, &u) in up.iter().enumerate() {
                        g[k] += u * bias[k % cols];
                    }
                }
                if self.wants(*b) {
                    let src = &self.nodes[x.0].data;
                    let g = buf!(b);
                    for (k, &u) in up.iter().enumerate() {
                        g[k % cols] += u * src[k];
                    }
                }
            }
            Op::Scale(x, c) => {
                if self.wants(*x) {
                    let g = buf!(x);
                    for (k, &u) in up.iter().enumerate() {
                        g[k] += c * u;
                    }
                }
            }
            Op::AddScalar(x) => {
                if self.wants(*x) {
                    let g = buf!(x);
                    for (d, &u) in g.iter_mut().zip(up) {
                        *d += u;
                    }
                }
            }
            Op::Clamp(x, lo, hi) => {
                if self.wants(*x) {
                    let src = &self.nodes[x.0].data;
                    let g = buf!(x);
                    for (k, &u) in up.iter().enumerate() {
                        if src[k] >= *lo && src[k] <= *hi {
                            g[k] += u;
                        }
                    }
                }
            }
            Op::Tanh(x) => {
                if self.wants(*x) {
                    let y = &self.nodes[i].data;
                    let g = buf!(x);
                    for (k, &u) in up.iter().enumerate() {
                        g[k] += u * (1.0 - y[k] * y[k]);
                    }
                }
            }
            Op::Sigmoid(x) => {
                if self.wants(*x) {
                    let y = &self.nodes[i].data;
                    let g = buf!(x);
                    for (k, &u) in up.iter().enumerate() {
                        g[k] += u * y[k] * (1.0 - y[k]);
                    }
                }
            }
            Op::Exp(x) => {
                if self.wants(*x) {
                    let y = &self.nodes[i].data;
                    let g = buf!(x);
                    for (k, &u) in up.iter().enumerate() {
                        g[k] += u * y[k];
                    }
                }
            }
            Op::Ln(x) => {
                if self.wants(*x) {
                    let src = &self.nodes[x.0].data;
                    let g = buf!(x);
                    for (k, &u) in up.iter().enumerate() {
                        g[k] += u / src[k];
                    }
                }
            }
            Op::Gelu(x) => {
                if self.wants(*x) {
                    let src = &self.nodes[x.0].data;
                    let g = buf!(x);
                    for (k, &u) in up.iter().enumerate() {
                        g[k] += u * gelu_derivative(src[k]);
                    }
                }
            }
            Op::SoftmaxRows(x) => {
                if self.wants(*x) {
                    let y = &self.nodes[i].data;
                    let cols = *self.nodes[i].shape.last().unwrap();
                    let rows = y.len() / cols;
                    let g = buf!(x);
                    for r in 0..rows {
                        let yr = &y[r * cols..(r + 1) * cols];
                        let ur = &up[r * cols..(r + 1) * cols];
                        let mut dot = 0.0;
                        for j in 0..cols {
                            dot += ur[j] * yr[j];
                        }
                        let gr = &mut g[r * cols..(r + 1) * cols];
                        for j in 0..cols {
                            gr[j] += yr[j] * (ur[j] - dot);
                        }
                    }
                }
            }
            Op::Normalize(x, eps) => {
                if self.wants(*x) {
                    let src = &self.nodes[x.0].data;
                    let y = &self.nodes[i].data;
                    let cols = *self.nodes[i].shape.last().unwrap();
                    let rows = y.len() / cols;
                    let nf = cols as f64;
                    let g = buf!(x);
                    for r in 0..rows {
                        let xr = &src[r * cols..(r + 1) * cols];
                        let yr = &y[r * cols..(r + 1) * cols];
                        let ur = &up[r * cols..(r + 1) * cols];
                        let (_, denom) = row_stats(xr, *eps);
                        let mut mean_u = 0.0;
                        let mut mean_uy = 0.0;
                        for j in 0..cols {
                            mean_u += ur[j];
                            mean_uy += ur[j] * yr[j];
                        }
                        mean_u /= nf;
                        mean_uy /= nf;
                        let gr = &mut g[r * cols..(r + 1) * cols];
                        for j in 0..cols {
                            gr[j] += (ur[j] - mean_u - yr[j] * mean_uy) / denom;
                        }
                    }
                }
            }
            Op::ConcatCols(parts) => {
                let total = *self.nodes[i].shape.last().unwrap();
                let rows = self.nodes[i].data.len() / total;
                let mut offset = 0usize;
                for &p in parts {
                    let w = *self.nodes[p.0].shape.last().unwrap();
                    if self.wants(p) {
                        let g = buf!(p);
                        for r in 0..rows {
                            for j in 0..w {
                                g[r * w + j] += up[r * total + offset + j];
                            }
                        }
                    }
                    offset += w;
                }
            }
            Op::SliceRows(x, start, end) => {
                if self.wants(*x) {
                    let stride: usize = self.nodes[x.0].shape[1..].iter().product();
                    debug_assert_eq!(up.len(), (end - start) * stride);
                    let g = buf!(x);
                    for (k, &u) in up.iter().enumerate() {
                        g[start * stride + k] += u;
                    }
                }
            }
            Op::Sum(x) => {
                if self.wants(*x) {
                    let g = buf!(x);
                    for d in g.iter_mut() {
                        *d += up[0];
                    }
                }
            }
            Op::Mean(x) => {
                if self.wants(*x) {
                    let n = self.nodes[x.0].data.len().max(1) as f64;
                    let share = up[0] / n;
                    let g = buf!(x);
                    for d in g.iter_mut() {
                        *d += share;
                    }
                }
            }
            Op::Embed(table, ids) => {
                if self.wants(*table) {
                    let d = self.nodes[table.0].shape[1];
                    let g = buf!(table);
                    for (t, &id) in ids.iter().enumerate() {
                        for j in 0..d {
                            g[id * d + j] += up[t * d + j];
                        }
                    }
                }
            }
        }
    }
}

fn accumulate(dst: &mut Option<Vec<f64>>, src: &[f64]) {
    match dst {
        Some(g) => {
            for (d, &s) in g.iter_mut().zip(src) {
                *d += s;
            }
        }
        None => *dst = Some(src.to_vec()),
    }
}

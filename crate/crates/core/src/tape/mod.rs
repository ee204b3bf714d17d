//! Dense reverse-mode automatic differentiation over row-major `f64` arrays.
//!
//! A [`Tape`] is an append-only arena. Trainable parameters are registered
//! first and live at the front of the arena; every other node (constants,
//! intermediate results) is discarded by [`Tape::reset`]. Node ids are handed
//! out in creation order, so a node's parents always have smaller ids and the
//! reverse sweep in [`Tape::backward`] is a single pass from the seed down.
//!
//! Shapes are `(rows, cols)`; a vector is `(n, 1)` and a scalar `(1, 1)`.
//! Binary elementwise ops only broadcast a scalar against an array. Wider
//! broadcasting goes through the explicit [`Tape::broadcast_rows`] and
//! [`Tape::broadcast_cols`] nodes.

mod elementwise;
mod linalg;
mod reduce;
mod structural;

pub use elementwise::{BinaryOp, UnaryOp};
pub use linalg::LinalgOp;
pub(crate) use linalg::dot;
pub use reduce::ReduceOp;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TapeError {
    #[error("{op}: shape mismatch {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("{op}: value {value} at index {index} is outside the domain")]
    Domain {
        op: &'static str,
        index: usize,
        value: f64,
    },
    #[error("div: division by zero at index {index}")]
    DivisionByZero { index: usize },
    #[error("{op}: empty input")]
    Empty { op: &'static str },
    #[error("backward: loss must be a scalar, got shape {rows}x{cols}")]
    NonScalarLoss { rows: usize, cols: usize },
    #[error("variable {id} does not belong to the current tape epoch")]
    StaleVar { id: usize },
    #[error("parameters must be registered before any other node")]
    ParamAfterOps,
    #[error("{0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, TapeError>;

/// Handle to a node on a [`Tape`].
///
/// Handles are cheap to copy. Non-parameter handles are invalidated by
/// [`Tape::reset`]; using one afterwards yields [`TapeError::StaleVar`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var {
    id: usize,
    epoch: u64,
    rows: usize,
    cols: usize,
}

impl Var {
    pub fn id(&self) -> usize {
        self.id
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_scalar(&self) -> bool {
        self.rows == 1 && self.cols == 1
    }
}

/// Transform applied when a parameter's raw storage is read.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reparam {
    Identity,
    /// Stored as a logarithm, read as `exp(raw)`; always strictly positive.
    Exp,
    /// Read as `ln(1 + exp(raw))`.
    Softplus,
}

/// A trainable tape variable plus the transform applied on read.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Param {
    raw: Var,
    reparam: Reparam,
}

impl Param {
    /// The raw storage node that the outer optimizer updates.
    pub fn raw(&self) -> Var {
        self.raw
    }

    pub fn reparam(&self) -> Reparam {
        self.reparam
    }
}

#[derive(Debug, Clone)]
pub(crate) enum Op {
    Param,
    Constant,
    Unary {
        op: UnaryOp,
        a: usize,
    },
    Binary {
        op: BinaryOp,
        a: usize,
        b: usize,
    },
    Reduce {
        op: ReduceOp,
        a: usize,
        index: usize,
    },
    ReduceRows {
        op: ReduceOp,
        a: usize,
        indices: Vec<usize>,
    },
    Linalg {
        op: LinalgOp,
        a: usize,
        b: usize,
    },
    Clamp {
        a: usize,
        pass: Vec<bool>,
    },
    StraightThrough {
        soft: usize,
    },
    Reshape {
        a: usize,
    },
    Slice {
        a: usize,
        start: usize,
    },
    SliceCols {
        a: usize,
        start: usize,
    },
    ConcatRows {
        parts: Vec<usize>,
    },
    BroadcastRows {
        a: usize,
    },
    BroadcastCols {
        a: usize,
    },
    Softmax {
        a: usize,
        by_rows: bool,
    },
}

#[derive(Debug, Clone)]
pub(crate) struct Node {
    pub(crate) op: Op,
    pub(crate) rows: usize,
    pub(crate) cols: usize,
    pub(crate) value: Vec<f64>,
    pub(crate) grad: Option<Vec<f64>>,
    pub(crate) needs_grad: bool,
}

/// The autodiff arena. Single-threaded; move it whole between threads.
#[derive(Debug, Clone, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    names: Vec<String>,
    epoch: u64,
    surrogate: bool,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    /// Number of nodes currently on the tape, parameters included.
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn num_params(&self) -> usize {
        self.names.len()
    }

    /// When set, straight-through nodes forward their soft input instead of
    /// the hard one. Gradient checks use this to compare the backward pass
    /// against finite differences of the surrogate the backward pass follows.
    pub fn set_surrogate_forward(&mut self, on: bool) {
        self.surrogate = on;
    }

    pub fn surrogate_forward(&self) -> bool {
        self.surrogate
    }

    /// Registers a trainable parameter. Must happen before any other node is
    /// recorded (or right after a [`reset`](Self::reset)).
    pub fn param(
        &mut self,
        name: impl Into<String>,
        values: Vec<f64>,
        rows: usize,
        cols: usize,
    ) -> Result<Var> {
        if self.nodes.len() != self.names.len() {
            return Err(TapeError::ParamAfterOps);
        }
        check_len("param", &values, rows, cols)?;
        self.names.push(name.into());
        Ok(self.push(Op::Param, rows, cols, values, true))
    }

    pub fn param_with(
        &mut self,
        name: impl Into<String>,
        values: Vec<f64>,
        rows: usize,
        cols: usize,
        reparam: Reparam,
    ) -> Result<Param> {
        let raw = self.param(name, values, rows, cols)?;
        Ok(Param { raw, reparam })
    }

    /// Reads a parameter through its reparameterization.
    pub fn read(&mut self, p: &Param) -> Result<Var> {
        match p.reparam {
            Reparam::Identity => {
                self.check(p.raw)?;
                Ok(p.raw)
            }
            Reparam::Exp => self.unary(UnaryOp::Exp, p.raw),
            Reparam::Softplus => self.unary(UnaryOp::Softplus, p.raw),
        }
    }

    /// Value of a parameter after its reparameterization, without recording.
    pub fn read_value(&self, p: &Param) -> Vec<f64> {
        let raw = &self.nodes[p.raw.id].value;
        match p.reparam {
            Reparam::Identity => raw.clone(),
            Reparam::Exp => raw.iter().map(|x| x.exp()).collect(),
            Reparam::Softplus => raw.iter().map(|&x| softplus(x)).collect(),
        }
    }

    pub fn constant(&mut self, values: Vec<f64>, rows: usize, cols: usize) -> Result<Var> {
        check_len("constant", &values, rows, cols)?;
        Ok(self.push(Op::Constant, rows, cols, values, false))
    }

    pub fn scalar(&mut self, value: f64) -> Var {
        self.push(Op::Constant, 1, 1, vec![value], false)
    }

    /// Column vector constant.
    pub fn vector(&mut self, values: Vec<f64>) -> Var {
        let n = values.len();
        self.push(Op::Constant, n, 1, values, false)
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.id].value
    }

    pub fn scalar_value(&self, v: Var) -> f64 {
        self.nodes[v.id].value[0]
    }

    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.nodes.get(v.id).and_then(|n| n.grad.as_deref())
    }

    pub fn is_trainable(&self, v: Var) -> bool {
        v.id < self.names.len()
    }

    /// Registered parameters in registration order.
    pub fn params(&self) -> impl Iterator<Item = (Var, &str)> + '_ {
        self.names.iter().enumerate().map(move |(id, name)| {
            let n = &self.nodes[id];
            (
                Var {
                    id,
                    epoch: self.epoch,
                    rows: n.rows,
                    cols: n.cols,
                },
                name.as_str(),
            )
        })
    }

    /// Mutable raw storage of a parameter.
    pub fn param_values_mut(&mut self, v: Var) -> Result<&mut [f64]> {
        if !self.is_trainable(v) {
            return Err(TapeError::InvalidArgument(format!(
                "node {} is not a parameter",
                v.id
            )));
        }
        Ok(&mut self.nodes[v.id].value)
    }

    /// Parameter storage together with its gradient, for optimizers.
    pub(crate) fn param_and_grad_mut(&mut self, id: usize) -> (&mut [f64], Option<&[f64]>) {
        let node = &mut self.nodes[id];
        (&mut node.value, node.grad.as_deref())
    }

    pub fn set_param_values(&mut self, v: Var, values: &[f64]) -> Result<()> {
        let dst = self.param_values_mut(v)?;
        if dst.len() != values.len() {
            return Err(TapeError::ShapeMismatch {
                op: "set_param_values",
                left: (dst.len(), 1),
                right: (values.len(), 1),
            });
        }
        dst.copy_from_slice(values);
        Ok(())
    }

    /// Clears every gradient buffer.
    pub fn zero_grad(&mut self) {
        for node in &mut self.nodes {
            node.grad = None;
        }
    }

    /// Truncates the tape back to the registered parameters.
    pub fn reset(&mut self) {
        self.nodes.truncate(self.names.len());
        self.epoch += 1;
    }

    /// Accumulates `d loss / d node` into every node reachable from `loss`.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        self.check(loss)?;
        if !loss.is_scalar() {
            return Err(TapeError::NonScalarLoss {
                rows: loss.rows,
                cols: loss.cols,
            });
        }
        let mut pass: Vec<Option<Vec<f64>>> = vec![None; loss.id + 1];
        pass[loss.id] = Some(vec![1.0]);
        for id in (0..=loss.id).rev() {
            let Some(g) = pass[id].take() else { continue };
            if !self.nodes[id].needs_grad {
                continue;
            }
            if g.iter().all(|&x| x == 0.0) {
                // nothing to propagate; parents still get (zero) buffers
                for p in parents(&self.nodes[id].op) {
                    slot(&self.nodes, &mut pass, p);
                }
            } else {
                backprop_node(&self.nodes, id, &g, &mut pass);
            }
            match &mut self.nodes[id].grad {
                Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, b)| *a += b),
                slot @ None => *slot = Some(g),
            }
        }
        Ok(())
    }

    pub(crate) fn check(&self, v: Var) -> Result<()> {
        let valid = if v.id < self.names.len() {
            true
        } else {
            v.epoch == self.epoch && v.id < self.nodes.len()
        };
        if !valid {
            return Err(TapeError::StaleVar { id: v.id });
        }
        Ok(())
    }

    pub(crate) fn node(&self, v: Var) -> &Node {
        &self.nodes[v.id]
    }

    pub(crate) fn needs(&self, v: Var) -> bool {
        self.nodes[v.id].needs_grad
    }

    pub(crate) fn push(
        &mut self,
        op: Op,
        rows: usize,
        cols: usize,
        value: Vec<f64>,
        needs_grad: bool,
    ) -> Var {
        debug_assert_eq!(value.len(), rows * cols);
        let id = self.nodes.len();
        self.nodes.push(Node {
            op,
            rows,
            cols,
            value,
            grad: None,
            needs_grad,
        });
        Var {
            id,
            epoch: self.epoch,
            rows,
            cols,
        }
    }
}

fn check_len(op: &'static str, values: &[f64], rows: usize, cols: usize) -> Result<()> {
    if values.len() != rows * cols {
        return Err(TapeError::ShapeMismatch {
            op,
            left: (rows, cols),
            right: (values.len(), 1),
        });
    }
    Ok(())
}

pub(crate) fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Gradient buffer of `id` in the current pass, allocated on first touch.
/// Returns `None` for nodes that do not need gradients.
pub(crate) fn slot<'a>(
    nodes: &[Node],
    pass: &'a mut [Option<Vec<f64>>],
    id: usize,
) -> Option<&'a mut Vec<f64>> {
    if !nodes[id].needs_grad {
        return None;
    }
    let len = nodes[id].value.len();
    Some(pass[id].get_or_insert_with(|| vec![0.0; len]))
}

fn parents(op: &Op) -> Vec<usize> {
    match op {
        Op::Param | Op::Constant => vec![],
        Op::Binary { a, b, .. } | Op::Linalg { a, b, .. } => vec![*a, *b],
        Op::StraightThrough { soft } => vec![*soft],
        Op::ConcatRows { parts } => parts.clone(),
        Op::Unary { a, .. }
        | Op::Reduce { a, .. }
        | Op::ReduceRows { a, .. }
        | Op::Clamp { a, .. }
        | Op::Reshape { a }
        | Op::Slice { a, .. }
        | Op::SliceCols { a, .. }
        | Op::BroadcastRows { a }
        | Op::BroadcastCols { a }
        | Op::Softmax { a, .. } => vec![*a],
    }
}

fn backprop_node(nodes: &[Node], id: usize, g: &[f64], pass: &mut [Option<Vec<f64>>]) {
    let node = &nodes[id];
    match &node.op {
        Op::Param | Op::Constant => {}
        Op::Unary { op, a } => elementwise::unary_backward(nodes, node, *op, *a, g, pass),
        Op::Binary { op, a, b } => elementwise::binary_backward(nodes, *op, *a, *b, g, pass),
        Op::Reduce { op, a, index } => reduce::reduce_backward(nodes, *op, *a, *index, g, pass),
        Op::ReduceRows { op, a, indices } => {
            reduce::reduce_rows_backward(nodes, node, *op, *a, indices, g, pass)
        }
        Op::Linalg { op, a, b } => linalg::linalg_backward(nodes, *op, *a, *b, g, pass),
        Op::Clamp { a, pass: mask } => {
            if let Some(dst) = slot(nodes, pass, *a) {
                for ((d, gi), &m) in dst.iter_mut().zip(g).zip(mask) {
                    if m {
                        *d += gi;
                    }
                }
            }
        }
        Op::StraightThrough { soft } => add_into(nodes, pass, *soft, 0, g),
        Op::Reshape { a } => add_into(nodes, pass, *a, 0, g),
        Op::Slice { a, start } => add_into(nodes, pass, *a, *start, g),
        Op::SliceCols { a, start } => {
            structural::slice_cols_backward(nodes, node, *a, *start, g, pass)
        }
        Op::ConcatRows { parts } => {
            let mut offset = 0;
            for &p in parts {
                let len = nodes[p].value.len();
                add_into(nodes, pass, p, 0, &g[offset..offset + len]);
                offset += len;
            }
        }
        Op::BroadcastRows { a } => {
            if let Some(dst) = slot(nodes, pass, *a) {
                for row in g.chunks(node.cols) {
                    dst.iter_mut().zip(row).for_each(|(d, x)| *d += x);
                }
            }
        }
        Op::BroadcastCols { a } => {
            if let Some(dst) = slot(nodes, pass, *a) {
                for (d, row) in dst.iter_mut().zip(g.chunks(node.cols)) {
                    *d += row.iter().sum::<f64>();
                }
            }
        }
        Op::Softmax { a, by_rows } => {
            structural::softmax_backward(nodes, node, *a, *by_rows, g, pass)
        }
    }
}

pub(crate) fn add_into(
    nodes: &[Node],
    pass: &mut [Option<Vec<f64>>],
    id: usize,
    offset: usize,
    g: &[f64],
) {
    if let Some(dst) = slot(nodes, pass, id) {
        dst[offset..offset + g.len()]
            .iter_mut()
            .zip(g)
            .for_each(|(d, x)| *d += x);
    }
}

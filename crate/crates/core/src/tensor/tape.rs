//! Define-by-run differentiation tape.
//!
//! Nodes are appended in execution order, so the tape is always
//! topologically sorted; the backward sweep walks it once in reverse,
//! accumulating gradients into parent slots.

use std::cell::RefCell;
use std::rc::Rc;

use crate::error::{Error, Result};

use super::{Scalar, Tensor};

pub(crate) type NodeId = usize;

/// Saved forward value: a detached tensor (shape + shared buffer).
pub(crate) type Saved<T> = Tensor<T>;

/// Externally-defined differentiable operation (see
/// [`Tensor::from_custom_op`]). Implementations capture whatever forward
/// state their backward pass needs.
pub trait CustomOp<T: Scalar> {
    fn name(&self) -> &'static str;
    /// Gradient of the loss w.r.t. each registered input, given the
    /// gradient w.r.t. this op's output.
    fn backward(&self, grad_out: &[T]) -> Vec<Vec<T>>;
}

/// How a binary op's operands were broadcast together.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Broadcast {
    /// Identical shapes.
    None,
    /// Left operand is a single-element scalar expanded to the right's shape.
    LeftScalar,
    /// Right operand is a single-element scalar.
    RightScalar,
    /// Right operand's shape is a suffix of the left's; payload is the
    /// right operand's element count.
    RightSuffix(usize),
}

pub(crate) enum Op<T: Scalar> {
    Leaf,
    Add(Broadcast),
    Sub(Broadcast),
    Mul(Broadcast, Saved<T>, Saved<T>),
    Div(Broadcast, Saved<T>, Saved<T>),
    /// Multiply by a constant.
    Scale(T),
    /// Add a constant.
    Shift,
    /// a: [m,k], b: [k,n].
    Matmul(Saved<T>, Saved<T>),
    /// Saved output; softmax over the last axis.
    Softmax(Saved<T>),
    LayerNorm(Saved<T>, T),
    Silu(Saved<T>),
    /// Saved output.
    Sigmoid(Saved<T>),
    Log(Saved<T>),
    /// Saved output.
    Exp(Saved<T>),
    Clamp(Saved<T>, T, T),
    /// Input element count.
    Sum(usize),
    Mean(usize),
    Reshape,
    /// Input was [rows, cols].
    Transpose2 { rows: usize, cols: usize },
    /// Concatenation along `axis`; the input shapes in order.
    Concat { axis: usize, in_shapes: Vec<Vec<usize>> },
    /// Slice along axis 0 of an input with `in_shape`.
    Narrow0 { start: usize, in_shape: Vec<usize> },
    Custom(Rc<dyn CustomOp<T>>),
}

pub(crate) struct Node<T: Scalar> {
    parents: Vec<Option<NodeId>>,
    op: Op<T>,
}

struct TapeInner<T: Scalar> {
    nodes: Vec<Node<T>>,
}

/// Shared handle to a recording tape. Cloning the handle shares the tape.
pub struct Tape<T: Scalar = f64>(Rc<RefCell<TapeInner<T>>>);

impl<T: Scalar> Clone for Tape<T> {
    fn clone(&self) -> Self {
        Tape(Rc::clone(&self.0))
    }
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Tape(Rc::new(RefCell::new(TapeInner { nodes: Vec::new() })))
    }

    pub fn len(&self) -> usize {
        self.0.borrow().nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub(crate) fn same_tape(&self, other: &Tape<T>) -> bool {
        Rc::ptr_eq(&self.0, &other.0)
    }

    pub(crate) fn push_leaf(&self) -> NodeId {
        self.push_node_inner(Node {
            parents: Vec::new(),
            op: Op::Leaf,
        })
    }

    pub(crate) fn push_node(&self, parents: Vec<Option<NodeId>>, op: Op<T>) -> NodeId {
        self.push_node_inner(Node { parents, op })
    }

    fn push_node_inner(&self, node: Node<T>) -> NodeId {
        let mut inner = self.0.borrow_mut();
        inner.nodes.push(node);
        inner.nodes.len() - 1
    }

    pub(crate) fn backward(&self, loss: NodeId) -> Result<Gradients<T>> {
        let inner = self.0.borrow();
        let n = inner.nodes.len();
        let mut grads: Vec<Option<Vec<T>>> = vec![None; n];
        grads[loss] = Some(vec![T::one()]);

        for id in (0..=loss).rev() {
            if grads[id].is_none() {
                continue;
            }
            let node = &inner.nodes[id];
            if matches!(node.op, Op::Leaf) {
                continue;
            }
            let grad_out = grads[id].take().expect("checked above");
            let parent_grads = node.op.backward(&grad_out);
            debug_assert_eq!(parent_grads.len(), node.parents.len());
            for (slot, grad) in node.parents.iter().zip(parent_grads) {
                let Some(pid) = slot else { continue };
                match &mut grads[*pid] {
                    Some(acc) => {
                        for (a, g) in acc.iter_mut().zip(&grad) {
                            *a += *g;
                        }
                    }
                    empty => *empty = Some(grad),
                }
            }
        }

        Ok(Gradients {
            tape: self.clone(),
            grads,
        })
    }
}

/// Result of a backward sweep: gradient per tape node.
pub struct Gradients<T: Scalar = f64> {
    tape: Tape<T>,
    grads: Vec<Option<Vec<T>>>,
}

impl<T: Scalar> Gradients<T> {
    /// Gradient of the loss w.r.t. a watched tensor. Returns a zero tensor
    /// of matching shape when the leaf was unreachable from the loss, and
    /// `None` when the tensor is not on this tape at all.
    pub fn wrt(&self, t: &Tensor<T>) -> Option<Tensor<T>> {
        let node = t.node()?;
        let tape = t.tape()?;
        if !tape.same_tape(&self.tape) {
            return None;
        }
        let data = match self.grads.get(node) {
            Some(Some(g)) => g.clone(),
            _ => vec![T::zero(); t.len()],
        };
        Tensor::from_vec(t.shape(), data).ok()
    }
}

impl<T: Scalar> Op<T> {
    /// Gradient w.r.t. each parent, aligned with the node's parent slots.
    fn backward(&self, grad_out: &[T]) -> Vec<Vec<T>> {
        match self {
            Op::Leaf => Vec::new(),
            Op::Add(b) => vec![
                reduce_to_left(grad_out, *b),
                reduce_to_right(grad_out, *b),
            ],
            Op::Sub(b) => {
                let neg: Vec<T> = grad_out.iter().map(|&g| -g).collect();
                vec![reduce_to_left(grad_out, *b), reduce_to_right(&neg, *b)]
            }
            Op::Mul(b, a, bb) => {
                let ga: Vec<T> = (0..grad_out.len())
                    .map(|i| grad_out[i] * pick(bb, i, *b, Side::Right))
                    .collect();
                let gb: Vec<T> = (0..grad_out.len())
                    .map(|i| grad_out[i] * pick(a, i, *b, Side::Left))
                    .collect();
                vec![reduce_to_left(&ga, *b), reduce_to_right(&gb, *b)]
            }
            Op::Div(b, a, bb) => {
                // out = a / b  =>  da = g / b ; db = -g a / b^2
                let n = grad_out.len();
                let mut ga = vec![T::zero(); n];
                let mut gb = vec![T::zero(); n];
                for i in 0..n {
                    let av = pick(a, i, *b, Side::Left);
                    let bv = pick(bb, i, *b, Side::Right);
                    ga[i] = grad_out[i] / bv;
                    gb[i] = -grad_out[i] * av / (bv * bv);
                }
                vec![reduce_to_left(&ga, *b), reduce_to_right(&gb, *b)]
            }
            Op::Scale(c) => vec![grad_out.iter().map(|&g| g * *c).collect()],
            Op::Shift => vec![grad_out.to_vec()],
            Op::Matmul(a, b) => {
                let (m, k) = (a.shape()[0], a.shape()[1]);
                let n = b.shape()[1];
                // dA = G B^T, dB = A^T G
                let mut da = vec![T::zero(); m * k];
                let mut db = vec![T::zero(); k * n];
                let ad = a.data();
                let bd = b.data();
                for i in 0..m {
                    for j in 0..n {
                        let g = grad_out[i * n + j];
                        if g == T::zero() {
                            continue;
                        }
                        for p in 0..k {
                            da[i * k + p] += g * bd[p * n + j];
                            db[p * n + j] += ad[i * k + p] * g;
                        }
                    }
                }
                vec![da, db]
            }
            Op::Softmax(y) => {
                let yd = y.data();
                let cols = *y.shape().last().expect("softmax rank >= 1");
                let mut dx = vec![T::zero(); yd.len()];
                for row in 0..yd.len() / cols {
                    let o = row * cols;
                    let mut dot = T::zero();
                    for c in 0..cols {
                        dot += grad_out[o + c] * yd[o + c];
                    }
                    for c in 0..cols {
                        dx[o + c] = yd[o + c] * (grad_out[o + c] - dot);
                    }
                }
                vec![dx]
            }
            Op::LayerNorm(x, eps) => {
                let xd = x.data();
                let cols = *x.shape().last().expect("layer_norm rank >= 1");
                let colsf = T::from_f64(cols as f64);
                let mut dx = vec![T::zero(); xd.len()];
                for row in 0..xd.len() / cols {
                    let o = row * cols;
                    let mut mean = T::zero();
                    for c in 0..cols {
                        mean += xd[o + c];
                    }
                    mean /= colsf;
                    let mut var = T::zero();
                    for c in 0..cols {
                        let d = xd[o + c] - mean;
                        var += d * d;
                    }
                    var /= colsf;
                    let inv_std = T::one() / (var + *eps).sqrt();
                    let mut g_mean = T::zero();
                    let mut gy_dot = T::zero();
                    for c in 0..cols {
                        let yh = (xd[o + c] - mean) * inv_std;
                        g_mean += grad_out[o + c];
                        gy_dot += grad_out[o + c] * yh;
                    }
                    g_mean /= colsf;
                    gy_dot /= colsf;
                    for c in 0..cols {
                        let yh = (xd[o + c] - mean) * inv_std;
                        dx[o + c] = inv_std * (grad_out[o + c] - g_mean - yh * gy_dot);
                    }
                }
                vec![dx]
            }
            Op::Silu(x) => {
                let dx = x
                    .data()
                    .iter()
                    .zip(grad_out)
                    .map(|(&v, &g)| {
                        let s = sigmoid_scalar(v);
                        g * s * (T::one() + v * (T::one() - s))
                    })
                    .collect();
                vec![dx]
            }
            Op::Sigmoid(y) => {
                let dx = y
                    .data()
                    .iter()
                    .zip(grad_out)
                    .map(|(&s, &g)| g * s * (T::one() - s))
                    .collect();
                vec![dx]
            }
            Op::Log(x) => {
                let dx = x
                    .data()
                    .iter()
                    .zip(grad_out)
                    .map(|(&v, &g)| g / v)
                    .collect();
                vec![dx]
            }
            Op::Exp(y) => {
                let dx = y
                    .data()
                    .iter()
                    .zip(grad_out)
                    .map(|(&e, &g)| g * e)
                    .collect();
                vec![dx]
            }
            Op::Clamp(x, lo, hi) => {
                let dx = x
                    .data()
                    .iter()
                    .zip(grad_out)
                    .map(|(&v, &g)| if v >= *lo && v <= *hi { g } else { T::zero() })
                    .collect();
                vec![dx]
            }
            Op::Sum(n) => vec![vec![grad_out[0]; *n]],
            Op::Mean(n) => {
                let scale = T::one() / T::from_f64(*n as f64);
                vec![vec![grad_out[0] * scale; *n]]
            }
            Op::Reshape => vec![grad_out.to_vec()],
            Op::Transpose2 { rows, cols } => {
                // Output is [cols, rows]; map back.
                let mut dx = vec![T::zero(); rows * cols];
                for r in 0..*rows {
                    for c in 0..*cols {
                        dx[r * cols + c] = grad_out[c * rows + r];
                    }
                }
                vec![dx]
            }
            Op::Concat { axis, in_shapes } => {
                let mut grads = Vec::with_capacity(in_shapes.len());
                let outer: usize = in_shapes[0][..*axis].iter().product();
                let inner: usize = in_shapes[0][*axis + 1..].iter().product();
                let total_axis: usize = in_shapes.iter().map(|s| s[*axis]).sum();
                let mut offset = 0usize;
                for shape in in_shapes {
                    let ext = shape[*axis];
                    let mut g = vec![T::zero(); outer * ext * inner];
                    for o in 0..outer {
                        for e in 0..ext {
                            let src = (o * total_axis + offset + e) * inner;
                            let dst = (o * ext + e) * inner;
                            g[dst..dst + inner].copy_from_slice(&grad_out[src..src + inner]);
                        }
                    }
                    grads.push(g);
                    offset += ext;
                }
                grads
            }
            Op::Narrow0 { start, in_shape } => {
                let inner: usize = in_shape[1..].iter().product();
                let mut dx = vec![T::zero(); in_shape.iter().product()];
                let o = start * inner;
                dx[o..o + grad_out.len()].copy_from_slice(grad_out);
                vec![dx]
            }
            Op::Custom(op) => op.backward(grad_out),
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Side {
    Left,
    Right,
}

fn pick<T: Scalar>(t: &Tensor<T>, i: usize, b: Broadcast, side: Side) -> T {
    let d = t.data();
    match (b, side) {
        (Broadcast::LeftScalar, Side::Left) | (Broadcast::RightScalar, Side::Right) => d[0],
        (Broadcast::RightSuffix(len), Side::Right) => d[i % len],
        _ => d[i],
    }
}

/// Reduce an output-shaped gradient onto the left operand's shape.
fn reduce_to_left<T: Scalar>(grad: &[T], b: Broadcast) -> Vec<T> {
    match b {
        Broadcast::LeftScalar => vec![grad.iter().copied().sum()],
        _ => grad.to_vec(),
    }
}

/// Reduce an output-shaped gradient onto the right operand's shape.
fn reduce_to_right<T: Scalar>(grad: &[T], b: Broadcast) -> Vec<T> {
    match b {
        Broadcast::RightScalar => vec![grad.iter().copied().sum()],
        Broadcast::RightSuffix(len) => {
            let mut out = vec![T::zero(); len];
            for (i, &g) in grad.iter().enumerate() {
                out[i % len] += g;
            }
            out
        }
        _ => grad.to_vec(),
    }
}

pub(crate) fn sigmoid_scalar<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

pub(crate) fn nonfinite_error(context: &str) -> Error {
    Error::Numeric(format!("non-finite value in {context}"))
}

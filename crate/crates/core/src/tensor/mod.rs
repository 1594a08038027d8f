//! Dense row-major tensors with reverse-mode differentiation.
//!
//! Tensors are immutable values; cloning shares the underlying buffer. A
//! tensor becomes differentiable by being watched on a [`Tape`], which
//! records every subsequent operation define-by-run. [`Tensor::backward`]
//! replays the tape in reverse and returns per-leaf gradients.
//!
//! The element type is `f64` by default; `f32` is supported through the
//! same generic surface for tolerance studies.

mod gradcheck;
mod ops;
mod tape;

pub use gradcheck::grad_check;
pub use tape::{CustomOp, Gradients, Tape};

use std::fmt;
use std::iter::Sum;
use std::sync::Arc;

use num_traits::{Float, NumAssign};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use tape::{NodeId, Op};

/// Element type bound for tensors: `f32` or `f64`.
pub trait Scalar:
    Float + NumAssign + Sum + fmt::Debug + fmt::Display + Default + 'static
{
    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;
}

impl Scalar for f32 {
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    fn to_f64(self) -> f64 {
        self as f64
    }
}
impl Scalar for f64 {
    fn from_f64(v: f64) -> Self {
        v
    }
    fn to_f64(self) -> f64 {
        self
    }
}

/// Initialization modes for [`Tensor::create`].
#[derive(Debug, Clone, Copy)]
pub enum Init {
    Zeros,
    Ones,
    Gaussian { seed: u64, mean: f64, std: f64 },
}

/// Dense row-major tensor, optionally attached to a differentiation tape.
#[derive(Clone)]
pub struct Tensor<T: Scalar = f64> {
    shape: Vec<usize>,
    data: Arc<Vec<T>>,
    node: Option<NodeId>,
    tape: Option<Tape<T>>,
}

impl<T: Scalar> fmt::Debug for Tensor<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.shape)
            .field("requires_grad", &self.requires_grad())
            .field("data", &&self.data[..self.data.len().min(8)])
            .finish()
    }
}

fn check_shape(shape: &[usize]) -> Result<usize> {
    if shape.is_empty() {
        return Err(Error::InvalidShape("rank-0 shapes are not supported".into()));
    }
    let mut n = 1usize;
    for &e in shape {
        if e == 0 {
            return Err(Error::InvalidShape(format!("zero extent in {shape:?}")));
        }
        n = n.checked_mul(e).ok_or_else(|| {
            Error::InvalidShape(format!("shape {shape:?} overflows element count"))
        })?;
    }
    Ok(n)
}

impl<T: Scalar> Tensor<T> {
    /// Create a tensor from an initialization mode. Gaussian init is
    /// deterministic for a fixed seed.
    pub fn create(shape: &[usize], init: Init) -> Result<Self> {
        let n = check_shape(shape)?;
        let data = match init {
            Init::Zeros => vec![T::zero(); n],
            Init::Ones => vec![T::one(); n],
            Init::Gaussian { seed, mean, std } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                (0..n)
                    .map(|_| {
                        let g: f64 = StandardNormal.sample(&mut rng);
                        T::from_f64(mean + std * g)
                    })
                    .collect()
            }
        };
        Ok(Self {
            shape: shape.to_vec(),
            data: Arc::new(data),
            node: None,
            tape: None,
        })
    }

    pub fn zeros(shape: &[usize]) -> Result<Self> {
        Self::create(shape, Init::Zeros)
    }

    pub fn ones(shape: &[usize]) -> Result<Self> {
        Self::create(shape, Init::Ones)
    }

    pub fn gaussian(shape: &[usize], seed: u64, mean: f64, std: f64) -> Result<Self> {
        Self::create(shape, Init::Gaussian { seed, mean, std })
    }

    pub fn full(shape: &[usize], value: T) -> Result<Self> {
        let n = check_shape(shape)?;
        Ok(Self {
            shape: shape.to_vec(),
            data: Arc::new(vec![value; n]),
            node: None,
            tape: None,
        })
    }

    pub fn from_vec(shape: &[usize], data: Vec<T>) -> Result<Self> {
        let n = check_shape(shape)?;
        if n != data.len() {
            return Err(Error::ShapeMismatch(format!(
                "shape {shape:?} wants {n} elements, got {}",
                data.len()
            )));
        }
        Ok(Self {
            shape: shape.to_vec(),
            data: Arc::new(data),
            node: None,
            tape: None,
        })
    }

    pub fn scalar(value: T) -> Self {
        Self {
            shape: vec![1],
            data: Arc::new(vec![value]),
            node: None,
            tape: None,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn to_vec(&self) -> Vec<T> {
        self.data.to_vec()
    }

    pub fn requires_grad(&self) -> bool {
        self.node.is_some()
    }

    /// Extract the single element of a scalar tensor.
    pub fn item(&self) -> Result<T> {
        if self.data.len() != 1 {
            return Err(Error::Contract(format!(
                "item() needs a scalar, shape is {:?}",
                self.shape
            )));
        }
        Ok(self.data[0])
    }

    /// Value at a multi-dimensional index (row-major).
    pub fn at(&self, index: &[usize]) -> T {
        assert_eq!(index.len(), self.shape.len(), "index rank mismatch");
        let mut flat = 0usize;
        for (i, (&ix, &ext)) in index.iter().zip(&self.shape).enumerate() {
            assert!(ix < ext, "index {ix} out of bounds at axis {i}");
            flat = flat * ext + ix;
        }
        self.data[flat]
    }

    /// Register this tensor as a differentiable leaf on `tape`. Returns a
    /// new handle sharing the same buffer.
    pub fn watch(&self, tape: &Tape<T>) -> Self {
        let node = tape.push_leaf();
        Self {
            shape: self.shape.clone(),
            data: Arc::clone(&self.data),
            node: Some(node),
            tape: Some(tape.clone()),
        }
    }

    /// Drop any tape attachment, yielding a constant view of the same buffer.
    pub fn detach(&self) -> Self {
        Self {
            shape: self.shape.clone(),
            data: Arc::clone(&self.data),
            node: None,
            tape: None,
        }
    }

    pub fn max_abs(&self) -> T {
        self.data
            .iter()
            .fold(T::zero(), |m, &v| if v.abs() > m { v.abs() } else { m })
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub(crate) fn node(&self) -> Option<NodeId> {
        self.node
    }

    pub(crate) fn tape(&self) -> Option<&Tape<T>> {
        self.tape.as_ref()
    }

    pub(crate) fn detached(shape: Vec<usize>, data: Vec<T>) -> Self {
        Self {
            shape,
            data: Arc::new(data),
            node: None,
            tape: None,
        }
    }

    /// Resolve the common tape of a set of operands, if any of them is
    /// attached to one. Operands on two distinct tapes are a contract error.
    fn joint_tape(inputs: &[&Tensor<T>]) -> Result<Option<Tape<T>>> {
        let mut found: Option<Tape<T>> = None;
        for t in inputs {
            if let Some(tape) = &t.tape {
                match &found {
                    None => found = Some(tape.clone()),
                    Some(prev) => {
                        if !prev.same_tape(tape) {
                            return Err(Error::Contract(
                                "operands belong to different tapes".into(),
                            ));
                        }
                    }
                }
            }
        }
        Ok(found)
    }

    /// Build an op result: records a tape node when any input is traced.
    fn op_result(
        inputs: &[&Tensor<T>],
        shape: Vec<usize>,
        data: Vec<T>,
        op: Op<T>,
    ) -> Result<Self> {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        let tape = Self::joint_tape(inputs)?;
        match tape {
            None => Ok(Self::detached(shape, data)),
            Some(tape) => {
                let parents: Vec<Option<NodeId>> = inputs.iter().map(|t| t.node).collect();
                let node = tape.push_node(parents, op);
                Ok(Self {
                    shape,
                    data: Arc::new(data),
                    node: Some(node),
                    tape: Some(tape),
                })
            }
        }
    }

    /// Record an externally-defined differentiable operation.
    ///
    /// `op.backward` receives the output gradient and must return one
    /// gradient buffer per input, in registration order.
    pub fn from_custom_op(
        inputs: &[&Tensor<T>],
        shape: &[usize],
        data: Vec<T>,
        op: std::rc::Rc<dyn CustomOp<T>>,
    ) -> Result<Self> {
        let n = check_shape(shape)?;
        if n != data.len() {
            return Err(Error::ShapeMismatch(format!(
                "custom op output shape {shape:?} wants {n} elements, got {}",
                data.len()
            )));
        }
        Self::op_result(inputs, shape.to_vec(), data, Op::Custom(op))
    }

    /// Reverse-mode sweep from a scalar loss. Gradients are populated for
    /// every watched leaf reachable from the loss; unreachable leaves read
    /// back as zeros.
    pub fn backward(&self) -> Result<Gradients<T>> {
        if self.data.len() != 1 {
            return Err(Error::Contract(format!(
                "backward() needs a scalar loss, shape is {:?}",
                self.shape
            )));
        }
        let (tape, node) = match (&self.tape, self.node) {
            (Some(tape), Some(node)) => (tape.clone(), node),
            _ => {
                return Err(Error::Contract(
                    "backward() needs a loss recorded on an active tape".into(),
                ))
            }
        };
        tape.backward(node)
    }
}

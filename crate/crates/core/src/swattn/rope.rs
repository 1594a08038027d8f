//! 1D rotary positional encoding along the time axis.
//!
//! Each token at frame `t` is rotated by a block-diagonal orthogonal
//! matrix whose 2x2 blocks turn consecutive element pairs by `t * w_j`,
//! with per-pair angular frequencies `w_j = base^(-2j/D)`. Scores between
//! rotated queries and keys then depend only on the frame difference.

use std::rc::Rc;

use crate::error::{Error, Result};
use crate::tensor::{CustomOp, Scalar, Tensor};

/// Rotary phase configuration for a token width `dim` (must be even).
#[derive(Debug, Clone)]
pub struct RotaryConfig {
    dim: usize,
    base: f64,
    /// w_j, strictly decreasing in j.
    freqs: Vec<f64>,
}

impl RotaryConfig {
    pub const DEFAULT_BASE: f64 = 10_000.0;

    pub fn new(dim: usize) -> Result<Self> {
        Self::with_base(dim, Self::DEFAULT_BASE)
    }

    pub fn with_base(dim: usize, base: f64) -> Result<Self> {
        if dim == 0 || dim % 2 != 0 {
            return Err(Error::InvalidShape(format!(
                "rotary width must be even and positive, got {dim}"
            )));
        }
        if base <= 1.0 {
            return Err(Error::InvalidInput(format!(
                "rotary base must exceed 1, got {base}"
            )));
        }
        let half = dim / 2;
        let freqs = (0..half)
            .map(|j| base.powf(-2.0 * j as f64 / dim as f64))
            .collect();
        Ok(Self { dim, base, freqs })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn base(&self) -> f64 {
        self.base
    }

    pub fn frequencies(&self) -> &[f64] {
        &self.freqs
    }

    /// Rotation angles for frame `t`: `angle_j = t * w_j`.
    pub fn rotation_angles(&self, t: i64) -> Vec<f64> {
        self.freqs.iter().map(|w| t as f64 * w).collect()
    }

    fn cos_sin(&self, t: i64) -> (Vec<f64>, Vec<f64>) {
        let angles = self.rotation_angles(t);
        (
            angles.iter().map(|a| a.cos()).collect(),
            angles.iter().map(|a| a.sin()).collect(),
        )
    }
}

/// Rotation of interleaved pairs; linear, so the backward pass is the
/// inverse rotation of the output gradient.
struct RopeRotate {
    cos: Vec<f64>,
    sin: Vec<f64>,
}

impl RopeRotate {
    fn apply<T: Scalar>(&self, x: &[T], out: &mut [T]) {
        let width = self.cos.len() * 2;
        for (row_in, row_out) in x.chunks_exact(width).zip(out.chunks_exact_mut(width)) {
            for j in 0..self.cos.len() {
                let c = T::from_f64(self.cos[j]);
                let s = T::from_f64(self.sin[j]);
                let a = row_in[2 * j];
                let b = row_in[2 * j + 1];
                row_out[2 * j] = a * c - b * s;
                row_out[2 * j + 1] = a * s + b * c;
            }
        }
    }

    fn inverse(&self) -> RopeRotate {
        RopeRotate {
            cos: self.cos.clone(),
            sin: self.sin.iter().map(|s| -s).collect(),
        }
    }
}

impl<T: Scalar> CustomOp<T> for RopeRotate {
    fn name(&self) -> &'static str {
        "rope_rotate"
    }

    fn backward(&self, grad_out: &[T]) -> Vec<Vec<T>> {
        let mut dx = vec![T::zero(); grad_out.len()];
        self.inverse().apply(grad_out, &mut dx);
        vec![dx]
    }
}

/// Rotate every token of `x` (last axis = `cfg.dim()`) by the frame-`t`
/// rotary phases. Norm-preserving and differentiable.
pub fn apply_rope<T: Scalar>(x: &Tensor<T>, t: i64, cfg: &RotaryConfig) -> Result<Tensor<T>> {
    let width = *x.shape().last().expect("rank >= 1");
    if width != cfg.dim() {
        return Err(Error::ShapeMismatch(format!(
            "rotary width {} does not divide token width {width}",
            cfg.dim()
        )));
    }
    let (cos, sin) = cfg.cos_sin(t);
    let op = RopeRotate { cos, sin };
    let mut out = vec![T::zero(); x.len()];
    op.apply(x.data(), &mut out);
    Tensor::from_custom_op(&[x], x.shape(), out, Rc::new(op))
}

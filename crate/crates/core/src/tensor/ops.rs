//! Forward implementations of the differentiable operation set.

use crate::error::{Error, Result};

use super::tape::{nonfinite_error, sigmoid_scalar, Broadcast, Op};
use super::{Scalar, Tensor};

impl<T: Scalar> Tensor<T> {
    fn broadcast_with(&self, rhs: &Tensor<T>, op: &str) -> Result<Broadcast> {
        if self.shape() == rhs.shape() {
            Ok(Broadcast::None)
        } else if rhs.len() == 1 {
            Ok(Broadcast::RightScalar)
        } else if self.len() == 1 {
            Ok(Broadcast::LeftScalar)
        } else if self.shape().len() > rhs.shape().len()
            && self.shape().ends_with(rhs.shape())
        {
            Ok(Broadcast::RightSuffix(rhs.len()))
        } else {
            Err(Error::ShapeMismatch(format!(
                "{op}: {:?} vs {:?}",
                self.shape(),
                rhs.shape()
            )))
        }
    }

    fn elementwise(
        &self,
        rhs: &Tensor<T>,
        op_name: &str,
        f: impl Fn(T, T) -> T,
        make_op: impl Fn(Broadcast, Tensor<T>, Tensor<T>) -> Op<T>,
    ) -> Result<Tensor<T>> {
        let b = self.broadcast_with(rhs, op_name)?;
        let (out_shape, n) = match b {
            Broadcast::LeftScalar => (rhs.shape().to_vec(), rhs.len()),
            _ => (self.shape().to_vec(), self.len()),
        };
        let ld = self.data();
        let rd = rhs.data();
        let data: Vec<T> = (0..n)
            .map(|i| {
                let l = match b {
                    Broadcast::LeftScalar => ld[0],
                    _ => ld[i],
                };
                let r = match b {
                    Broadcast::RightScalar => rd[0],
                    Broadcast::RightSuffix(len) => rd[i % len],
                    _ => rd[i],
                };
                f(l, r)
            })
            .collect();
        Tensor::op_result(
            &[self, rhs],
            out_shape,
            data,
            make_op(b, self.detach(), rhs.detach()),
        )
    }

    pub fn add(&self, rhs: &Tensor<T>) -> Result<Tensor<T>> {
        self.elementwise(rhs, "add", |a, b| a + b, |b, _, _| Op::Add(b))
    }

    pub fn sub(&self, rhs: &Tensor<T>) -> Result<Tensor<T>> {
        self.elementwise(rhs, "sub", |a, b| a - b, |b, _, _| Op::Sub(b))
    }

    pub fn mul(&self, rhs: &Tensor<T>) -> Result<Tensor<T>> {
        self.elementwise(rhs, "mul", |a, b| a * b, |b, l, r| Op::Mul(b, l, r))
    }

    pub fn div(&self, rhs: &Tensor<T>) -> Result<Tensor<T>> {
        self.elementwise(rhs, "div", |a, b| a / b, |b, l, r| Op::Div(b, l, r))
    }

    /// Multiply every element by a constant.
    pub fn scale(&self, c: T) -> Tensor<T> {
        let data = self.data().iter().map(|&v| v * c).collect();
        Tensor::op_result(&[self], self.shape().to_vec(), data, Op::Scale(c))
            .expect("scale preserves shape")
    }

    /// Add a constant to every element.
    pub fn shift(&self, c: T) -> Tensor<T> {
        let data = self.data().iter().map(|&v| v + c).collect();
        Tensor::op_result(&[self], self.shape().to_vec(), data, Op::Shift)
            .expect("shift preserves shape")
    }

    pub fn neg(&self) -> Tensor<T> {
        self.scale(-T::one())
    }

    /// Matrix product of `[m,k]` and `[k,n]`.
    pub fn matmul(&self, rhs: &Tensor<T>) -> Result<Tensor<T>> {
        if self.shape().len() != 2 || rhs.shape().len() != 2 {
            return Err(Error::ShapeMismatch(format!(
                "matmul needs rank-2 operands, got {:?} and {:?}",
                self.shape(),
                rhs.shape()
            )));
        }
        let (m, k) = (self.shape()[0], self.shape()[1]);
        let (k2, n) = (rhs.shape()[0], rhs.shape()[1]);
        if k != k2 {
            return Err(Error::ShapeMismatch(format!(
                "matmul inner extents differ: {:?} x {:?}",
                self.shape(),
                rhs.shape()
            )));
        }
        let a = self.data();
        let b = rhs.data();
        let mut out = vec![T::zero(); m * n];
        for i in 0..m {
            for p in 0..k {
                let av = a[i * k + p];
                if av == T::zero() {
                    continue;
                }
                let row = &b[p * n..(p + 1) * n];
                let dst = &mut out[i * n..(i + 1) * n];
                for (d, &bv) in dst.iter_mut().zip(row) {
                    *d += av * bv;
                }
            }
        }
        Tensor::op_result(
            &[self, rhs],
            vec![m, n],
            out,
            Op::Matmul(self.detach(), rhs.detach()),
        )
    }

    /// Numerically stabilized softmax over the last axis.
    pub fn softmax_lastdim(&self) -> Result<Tensor<T>> {
        let cols = *self.shape().last().expect("rank >= 1");
        if !self.is_finite() {
            return Err(nonfinite_error("softmax_lastdim input"));
        }
        let x = self.data();
        let mut out = vec![T::zero(); x.len()];
        for row in 0..x.len() / cols {
            let o = row * cols;
            let mut max = x[o];
            for c in 1..cols {
                if x[o + c] > max {
                    max = x[o + c];
                }
            }
            let mut sum = T::zero();
            for c in 0..cols {
                let e = (x[o + c] - max).exp();
                out[o + c] = e;
                sum += e;
            }
            for c in 0..cols {
                out[o + c] /= sum;
            }
        }
        let saved = Tensor::from_vec(self.shape(), out.clone())?;
        Tensor::op_result(&[self], self.shape().to_vec(), out, Op::Softmax(saved))
    }

    /// Normalize each last-axis slice to zero mean and unit variance.
    pub fn layer_norm(&self, eps: T) -> Result<Tensor<T>> {
        let cols = *self.shape().last().expect("rank >= 1");
        if cols < 2 {
            return Err(Error::Contract(format!(
                "layer_norm needs last extent >= 2, shape is {:?}",
                self.shape()
            )));
        }
        let x = self.data();
        let colsf = T::from_f64(cols as f64);
        let mut out = vec![T::zero(); x.len()];
        for row in 0..x.len() / cols {
            let o = row * cols;
            let mut mean = T::zero();
            for c in 0..cols {
                mean += x[o + c];
            }
            mean /= colsf;
            let mut var = T::zero();
            for c in 0..cols {
                let d = x[o + c] - mean;
                var += d * d;
            }
            var /= colsf;
            let inv_std = T::one() / (var + eps).sqrt();
            for c in 0..cols {
                out[o + c] = (x[o + c] - mean) * inv_std;
            }
        }
        Tensor::op_result(
            &[self],
            self.shape().to_vec(),
            out,
            Op::LayerNorm(self.detach(), eps),
        )
    }

    pub fn silu(&self) -> Tensor<T> {
        let data = self
            .data()
            .iter()
            .map(|&v| v * sigmoid_scalar(v))
            .collect();
        Tensor::op_result(&[self], self.shape().to_vec(), data, Op::Silu(self.detach()))
            .expect("silu preserves shape")
    }

    pub fn sigmoid(&self) -> Tensor<T> {
        let data: Vec<T> = self.data().iter().map(|&v| sigmoid_scalar(v)).collect();
        let saved = Tensor::detached(self.shape().to_vec(), data.clone());
        Tensor::op_result(&[self], self.shape().to_vec(), data, Op::Sigmoid(saved))
            .expect("sigmoid preserves shape")
    }

    /// Natural logarithm; the caller guarantees positive inputs.
    pub fn log(&self) -> Tensor<T> {
        let data = self.data().iter().map(|&v| v.ln()).collect();
        Tensor::op_result(&[self], self.shape().to_vec(), data, Op::Log(self.detach()))
            .expect("log preserves shape")
    }

    pub fn exp(&self) -> Tensor<T> {
        let data: Vec<T> = self.data().iter().map(|&v| v.exp()).collect();
        let saved = Tensor::detached(self.shape().to_vec(), data.clone());
        Tensor::op_result(&[self], self.shape().to_vec(), data, Op::Exp(saved))
            .expect("exp preserves shape")
    }

    pub fn clamp(&self, lo: T, hi: T) -> Tensor<T> {
        let data = self
            .data()
            .iter()
            .map(|&v| if v < lo { lo } else if v > hi { hi } else { v })
            .collect();
        Tensor::op_result(
            &[self],
            self.shape().to_vec(),
            data,
            Op::Clamp(self.detach(), lo, hi),
        )
        .expect("clamp preserves shape")
    }

    /// Sum of all elements, as a `[1]` tensor.
    pub fn sum(&self) -> Tensor<T> {
        let s = self.data().iter().copied().sum();
        Tensor::op_result(&[self], vec![1], vec![s], Op::Sum(self.len()))
            .expect("sum is scalar")
    }

    /// Mean of all elements, as a `[1]` tensor.
    pub fn mean(&self) -> Tensor<T> {
        let s: T = self.data().iter().copied().sum();
        let m = s / T::from_f64(self.len() as f64);
        Tensor::op_result(&[self], vec![1], vec![m], Op::Mean(self.len()))
            .expect("mean is scalar")
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor<T>> {
        let n: usize = shape.iter().product();
        if n != self.len() || shape.iter().any(|&e| e == 0) {
            return Err(Error::ShapeMismatch(format!(
                "cannot reshape {:?} into {shape:?}",
                self.shape()
            )));
        }
        Tensor::op_result(&[self], shape.to_vec(), self.to_vec(), Op::Reshape)
    }

    /// Transpose a rank-2 tensor.
    pub fn transpose2(&self) -> Result<Tensor<T>> {
        if self.shape().len() != 2 {
            return Err(Error::ShapeMismatch(format!(
                "transpose2 needs rank 2, shape is {:?}",
                self.shape()
            )));
        }
        let (rows, cols) = (self.shape()[0], self.shape()[1]);
        let x = self.data();
        let mut out = vec![T::zero(); x.len()];
        for r in 0..rows {
            for c in 0..cols {
                out[c * rows + r] = x[r * cols + c];
            }
        }
        Tensor::op_result(
            &[self],
            vec![cols, rows],
            out,
            Op::Transpose2 { rows, cols },
        )
    }

    /// Concatenate tensors along `axis`; shapes must agree elsewhere.
    pub fn concat(parts: &[&Tensor<T>], axis: usize) -> Result<Tensor<T>> {
        if parts.is_empty() {
            return Err(Error::InvalidInput("concat of zero tensors".into()));
        }
        let rank = parts[0].shape().len();
        if axis >= rank {
            return Err(Error::ShapeMismatch(format!(
                "concat axis {axis} out of range for rank {rank}"
            )));
        }
        for p in parts {
            if p.shape().len() != rank {
                return Err(Error::ShapeMismatch("concat rank mismatch".into()));
            }
            for (a, (&x, &y)) in parts[0].shape().iter().zip(p.shape()).enumerate() {
                if a != axis && x != y {
                    return Err(Error::ShapeMismatch(format!(
                        "concat extents differ off-axis: {:?} vs {:?}",
                        parts[0].shape(),
                        p.shape()
                    )));
                }
            }
        }
        let outer: usize = parts[0].shape()[..axis].iter().product();
        let inner: usize = parts[0].shape()[axis + 1..].iter().product();
        let total_axis: usize = parts.iter().map(|p| p.shape()[axis]).sum();
        let mut shape = parts[0].shape().to_vec();
        shape[axis] = total_axis;
        let mut out = vec![T::zero(); outer * total_axis * inner];
        let mut offset = 0usize;
        for p in parts {
            let ext = p.shape()[axis];
            let pd = p.data();
            for o in 0..outer {
                for e in 0..ext {
                    let dst = (o * total_axis + offset + e) * inner;
                    let src = (o * ext + e) * inner;
                    out[dst..dst + inner].copy_from_slice(&pd[src..src + inner]);
                }
            }
            offset += ext;
        }
        let in_shapes = parts.iter().map(|p| p.shape().to_vec()).collect();
        Tensor::op_result(parts, shape, out, Op::Concat { axis, in_shapes })
    }

    /// Slice `len` entries along axis 0 starting at `start`.
    pub fn narrow0(&self, start: usize, len: usize) -> Result<Tensor<T>> {
        let ext = self.shape()[0];
        if start + len > ext || len == 0 {
            return Err(Error::ShapeMismatch(format!(
                "narrow0({start}, {len}) out of range for extent {ext}"
            )));
        }
        let inner: usize = self.shape()[1..].iter().product();
        let mut shape = self.shape().to_vec();
        shape[0] = len;
        let data = self.data()[start * inner..(start + len) * inner].to_vec();
        Tensor::op_result(
            &[self],
            shape,
            data,
            Op::Narrow0 {
                start,
                in_shape: self.shape().to_vec(),
            },
        )
    }

}

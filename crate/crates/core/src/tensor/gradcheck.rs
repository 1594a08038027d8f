//! Central-finite-difference gradient verification.

use crate::error::Result;

use super::tape::nonfinite_error;
use super::{Scalar, Tape, Tensor};

/// Compare the tape gradient of `f` at `x` against central finite
/// differences. Returns the maximum relative error over elements,
/// `|analytic - numeric| / max(|analytic|, |numeric|, 1e-8)`.
pub fn grad_check<T, F>(f: F, x: &Tensor<T>, eps: T) -> Result<T>
where
    T: Scalar,
    F: Fn(&Tensor<T>) -> Result<Tensor<T>>,
{
    let tape = Tape::new();
    let xw = x.watch(&tape);
    let y = f(&xw)?;
    if y.len() != 1 {
        return Err(crate::error::Error::Contract(
            "grad_check needs a scalar-valued function".into(),
        ));
    }
    if !y.is_finite() {
        return Err(nonfinite_error("grad_check forward evaluation"));
    }
    let analytic = match y.backward() {
        Ok(grads) => grads
            .wrt(&xw)
            .map(|g| g.to_vec())
            .unwrap_or_else(|| vec![T::zero(); x.len()]),
        // A constant function never touches the tape; its gradient is zero.
        Err(_) => vec![T::zero(); x.len()],
    };

    let floor = T::from_f64(1e-8);
    let two = T::from_f64(2.0);
    let mut max_err = T::zero();
    let base = x.to_vec();
    for i in 0..base.len() {
        let mut plus = base.clone();
        plus[i] += eps;
        let mut minus = base.clone();
        minus[i] -= eps;
        let fp = f(&Tensor::from_vec(x.shape(), plus)?)?.item()?;
        let fm = f(&Tensor::from_vec(x.shape(), minus)?)?.item()?;
        if !fp.is_finite() || !fm.is_finite() {
            return Err(nonfinite_error("grad_check perturbed evaluation"));
        }
        let numeric = (fp - fm) / (two * eps);
        let denom = analytic[i].abs().max(numeric.abs()).max(floor);
        let err = (analytic[i] - numeric).abs() / denom;
        if err > max_err {
            max_err = err;
        }
    }
    Ok(max_err)
}

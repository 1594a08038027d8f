//! Mask alignment losses over traced mask tensors.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

use super::mask::MaskImage;

/// Weights of the adaptive alignment loss. `lambda1`/`lambda2` belong to
/// the standalone BCE+Dice mix; the remaining weights drive the adaptive
/// objective, which falls back to a centroid-seeking branch while the
/// masks barely overlap.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct LossWeights {
    pub lambda1: f64,
    pub lambda2: f64,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub delta: f64,
    pub epsilon: f64,
    pub zeta: f64,
    pub switch_threshold: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda1: 1.0,
            lambda2: 1.0,
            alpha: 1.0,
            beta: 1.0,
            gamma: 0.1,
            delta: 0.5,
            epsilon: 0.1,
            zeta: 10.0,
            switch_threshold: 0.999,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.lambda1,
            self.lambda2,
            self.alpha,
            self.beta,
            self.gamma,
            self.delta,
            self.epsilon,
            self.zeta,
        ];
        if all.iter().any(|&w| w < 0.0) {
            return Err(Error::InvalidInput("loss weights must be >= 0".into()));
        }
        Ok(())
    }
}

/// Which branch of the adaptive loss fired.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Branch {
    /// BCE + Dice + L1 + center.
    Full,
    /// Dice + center only, for near-zero overlap.
    Fallback,
}

const DICE_SMOOTHING: f64 = 1.0;
const BCE_CLAMP: f64 = 1e-6;

fn mask_tensor(mask: &MaskImage) -> Result<Tensor> {
    Tensor::from_vec(&[mask.height(), mask.width()], mask.data().to_vec())
}

fn check_sizes(pred: &Tensor, gt: &Tensor) -> Result<()> {
    if pred.shape() != gt.shape() {
        return Err(Error::ShapeMismatch(format!(
            "mask shapes differ: {:?} vs {:?}",
            pred.shape(),
            gt.shape()
        )));
    }
    Ok(())
}

/// Mean binary cross-entropy with predictions clamped to
/// `[1e-6, 1 - 1e-6]`.
pub fn bce_loss_t(pred: &Tensor, gt: &Tensor) -> Result<Tensor> {
    check_sizes(pred, gt)?;
    let p = pred.clamp(BCE_CLAMP, 1.0 - BCE_CLAMP);
    let one_minus_p = p.neg().shift(1.0);
    let one_minus_g = gt.neg().shift(1.0);
    let term = gt.mul(&p.log())?.add(&one_minus_g.mul(&one_minus_p.log())?)?;
    Ok(term.mean().neg())
}

/// Smoothed Dice loss `1 - (2 sum(pg) + s) / (sum p + sum g + s)`.
pub fn dice_loss_t(pred: &Tensor, gt: &Tensor) -> Result<Tensor> {
    check_sizes(pred, gt)?;
    let numer = pred.mul(gt)?.sum().scale(2.0).shift(DICE_SMOOTHING);
    let denom = pred.sum().add(&gt.sum())?.shift(DICE_SMOOTHING);
    Ok(numer.div(&denom)?.neg().shift(1.0))
}

/// Mean absolute per-pixel difference.
pub fn l1_loss_t(pred: &Tensor, gt: &Tensor) -> Result<Tensor> {
    check_sizes(pred, gt)?;
    let d = pred.sub(gt)?;
    let abs = d
        .clamp(0.0, f64::INFINITY)
        .add(&d.neg().clamp(0.0, f64::INFINITY))?;
    Ok(abs.mean())
}

/// Normalized centroid of a traced mask, as two scalars. Falls back to the
/// image center (constant, no gradient) when the mask is empty.
pub fn centroid_t(pred: &Tensor) -> Result<(Tensor, Tensor)> {
    let (h, w) = (pred.shape()[0], pred.shape()[1]);
    let mass = pred.sum();
    if mass.item()? <= 1e-9 {
        return Ok((Tensor::scalar(0.5), Tensor::scalar(0.5)));
    }
    let mut xs = Vec::with_capacity(h * w);
    let mut ys = Vec::with_capacity(h * w);
    for y in 0..h {
        for x in 0..w {
            xs.push(x as f64 + 0.5);
            ys.push(y as f64 + 0.5);
        }
    }
    let xs = Tensor::from_vec(&[h, w], xs)?;
    let ys = Tensor::from_vec(&[h, w], ys)?;
    let cx = pred.mul(&xs)?.sum().div(&mass)?.scale(1.0 / w as f64);
    let cy = pred.mul(&ys)?.sum().div(&mass)?.scale(1.0 / h as f64);
    Ok((cx, cy))
}

/// Squared displacement between the traced centroid and a fixed target.
pub fn center_term_t(pred: &Tensor, gt_centroid: (f64, f64)) -> Result<Tensor> {
    let (cx, cy) = centroid_t(pred)?;
    let dx = cx.shift(-gt_centroid.0);
    let dy = cy.shift(-gt_centroid.1);
    dx.mul(&dx)?.add(&dy.mul(&dy)?)
}

/// Mean squared centroid displacement over frames (plain values).
pub fn center_loss(pred: &[(f64, f64)], gt: &[(f64, f64)]) -> Result<f64> {
    if pred.len() != gt.len() {
        return Err(Error::ShapeMismatch(format!(
            "centroid list lengths differ: {} vs {}",
            pred.len(),
            gt.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::InvalidInput("centroid lists are empty".into()));
    }
    let sum: f64 = pred
        .iter()
        .zip(gt)
        .map(|(p, g)| (p.0 - g.0).powi(2) + (p.1 - g.1).powi(2))
        .sum();
    Ok(sum / pred.len() as f64)
}

/// Standalone `lambda1 * BCE + lambda2 * Dice` mix.
pub fn mask_loss_t(pred: &Tensor, gt: &Tensor, weights: &LossWeights) -> Result<Tensor> {
    bce_loss_t(pred, gt)?
        .scale(weights.lambda1)
        .add(&dice_loss_t(pred, gt)?.scale(weights.lambda2))
}

/// Adaptive total loss: evaluates the Dice loss first and selects the
/// centroid-seeking fallback branch when it exceeds the threshold.
pub fn adaptive_total_loss_t(
    pred: &Tensor,
    gt: &Tensor,
    gt_centroid: (f64, f64),
    weights: &LossWeights,
) -> Result<(Tensor, Branch)> {
    weights.validate()?;
    let dice = dice_loss_t(pred, gt)?;
    let center = center_term_t(pred, gt_centroid)?;
    if dice.item()? > weights.switch_threshold {
        let loss = dice.scale(weights.epsilon).add(&center.scale(weights.zeta))?;
        Ok((loss, Branch::Fallback))
    } else {
        let loss = bce_loss_t(pred, gt)?
            .scale(weights.alpha)
            .add(&dice.scale(weights.beta))?
            .add(&l1_loss_t(pred, gt)?.scale(weights.gamma))?
            .add(&center.scale(weights.delta))?;
        Ok((loss, Branch::Full))
    }
}

/// Convenience entry points over plain masks.
pub fn bce_loss(pred: &MaskImage, gt: &MaskImage) -> Result<f64> {
    bce_loss_t(&mask_tensor(pred)?, &mask_tensor(gt)?)?.item()
}

pub fn dice_loss(pred: &MaskImage, gt: &MaskImage) -> Result<f64> {
    dice_loss_t(&mask_tensor(pred)?, &mask_tensor(gt)?)?.item()
}

pub fn adaptive_total_loss(
    pred: &MaskImage,
    gt: &MaskImage,
    weights: &LossWeights,
) -> Result<(f64, Branch)> {
    let gt_t = mask_tensor(gt)?;
    let centroid = gt.centroid().unwrap_or((0.5, 0.5));
    let (loss, branch) = adaptive_total_loss_t(&mask_tensor(pred)?, &gt_t, centroid, weights)?;
    Ok((loss.item()?, branch))
}

/// Dice similarity coefficient (1 - dice loss), for reporting.
pub fn dice_coefficient(pred: &MaskImage, gt: &MaskImage) -> Result<f64> {
    Ok(1.0 - dice_loss(pred, gt)?)
}

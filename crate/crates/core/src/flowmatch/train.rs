//! Rectified flow-matching loss and the toy training loop.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::optim::Adam;
use crate::tensor::{Tape, Tensor};

use super::model::{Supervision, ToyDiT, ToyDiTConfig, VelocityField};
use super::synth::SyntheticSequence;

/// Rectified-flow target velocity: exactly `x1 - x0`.
pub fn flow_target(x0: &Tensor, x1: &Tensor) -> Result<Tensor> {
    x1.sub(x0)
}

/// Derive the per-frame noise stream for absolute frame index `frame`.
pub fn frame_noise_seed(seed: u64, frame: i64) -> u64 {
    (seed ^ 0x5851_F42D_4C95_7F2D).wrapping_add((frame as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

fn gaussian_like_frames(shape: &[usize], seed: u64, frame_offset: i64) -> Result<Tensor> {
    let (t_len, n, d) = (shape[0], shape[1], shape[2]);
    let mut frames = Vec::with_capacity(t_len);
    for t in 0..t_len {
        frames.push(Tensor::gaussian(
            &[1, n, d],
            frame_noise_seed(seed, frame_offset + t as i64),
            0.0,
            1.0,
        )?);
    }
    let refs: Vec<&Tensor> = frames.iter().collect();
    Tensor::concat(&refs, 0)
}

/// Flow-matching loss on one windowed clip.
///
/// Per frame, `x_s = (1-s) x0 + s x1` with independent per-frame noise.
/// The predicted velocity is compared against `v* = x1 - x0` on the clip's
/// target frame (or all frames, per the supervision setting); the result
/// is a mean-squared error, traced if the model is.
pub fn fm_loss(
    field: &impl VelocityField,
    x1_clip: &Tensor,
    cond_clip: &Tensor,
    center: usize,
    s: f64,
    noise_seed: u64,
    frame_offset: i64,
    supervision: Supervision,
) -> Result<Tensor> {
    if !(0.0..=1.0).contains(&s) {
        return Err(Error::Contract(format!("flow time {s} outside [0, 1]")));
    }
    let t_len = x1_clip.shape()[0];
    if center >= t_len {
        return Err(Error::Contract(format!(
            "target frame {center} outside clip of length {t_len}"
        )));
    }
    let x0 = gaussian_like_frames(x1_clip.shape(), noise_seed, frame_offset)?;
    let xs = x0.scale(1.0 - s).add(&x1_clip.scale(s))?;
    let v_star = flow_target(&x0, x1_clip)?;
    let v_hat = field.velocity(&xs, cond_clip, s, frame_offset, None)?;
    let diff = match supervision {
        Supervision::CenterFrame => v_hat
            .narrow0(center, 1)?
            .sub(&v_star.narrow0(center, 1)?)?,
        Supervision::AllFrames => v_hat.sub(&v_star)?,
    };
    Ok(diff.mul(&diff)?.mean())
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct TrainConfig {
    pub steps: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    /// Clips per optimization step.
    pub batch: usize,
    /// Frames per training window cut from each sequence.
    pub clip_len: usize,
    /// Stride between window starts.
    pub hop: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 2000,
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            batch: 16,
            clip_len: 48,
            hop: 24,
            seed: 0,
        }
    }
}

/// Window start offsets for a sequence of `t_len` frames.
pub fn window_starts(t_len: usize, clip_len: usize, hop: usize) -> Vec<usize> {
    if t_len <= clip_len {
        return vec![0];
    }
    (0..=(t_len - clip_len)).step_by(hop.max(1)).collect()
}

pub struct TrainResult {
    pub model: ToyDiT,
    /// `(step, batch loss)` per optimization step.
    pub loss_trace: Vec<(usize, f64)>,
}

/// Mean of the first and last `window` entries of a loss trace.
pub fn smoothed_endpoints(trace: &[(usize, f64)], window: usize) -> (f64, f64) {
    let w = window.min(trace.len()).max(1);
    let head: f64 = trace[..w].iter().map(|(_, l)| l).sum::<f64>() / w as f64;
    let tail: f64 = trace[trace.len() - w..].iter().map(|(_, l)| l).sum::<f64>() / w as f64;
    (head, tail)
}

/// Minibatch Adam on [`fm_loss`] over sliding windows of the dataset.
pub fn train_demo(
    cfg: ToyDiTConfig,
    dataset: &[SyntheticSequence],
    train: &TrainConfig,
    model_seed: u64,
) -> Result<TrainResult> {
    if dataset.is_empty() {
        return Err(Error::InvalidInput("training dataset is empty".into()));
    }
    let mut model = ToyDiT::new(cfg.clone(), model_seed)?;
    let w_self = cfg.window.w_self;

    // (sequence, window start) pairs with window length clamped per sequence.
    let mut windows: Vec<(usize, usize, usize)> = Vec::new();
    for (i, seq) in dataset.iter().enumerate() {
        let t_len = seq.latents.shape()[0];
        let len = train.clip_len.min(t_len);
        for start in window_starts(t_len, train.clip_len, train.hop) {
            windows.push((i, start, len));
        }
    }

    let sizes: Vec<usize> = model.params().iter().map(|(_, t)| t.len()).collect();
    let mut adam = Adam::new(train.lr, train.beta1, train.beta2, train.adam_eps, &sizes);
    let mut values = model.param_values();
    let mut rng = ChaCha8Rng::seed_from_u64(train.seed);
    let mut trace = Vec::with_capacity(train.steps);

    for step in 0..train.steps {
        let tape = Tape::new();
        let traced = model.traced(&tape);
        let mut batch_loss: Option<Tensor> = None;
        for _ in 0..train.batch {
            let (seq_idx, w_start, w_len) = windows[rng.random_range(0..windows.len())];
            let seq = &dataset[seq_idx];
            let center_abs = w_start + rng.random_range(0..w_len);
            let lo = center_abs.saturating_sub(w_self).max(w_start);
            let hi = (center_abs + w_self).min(w_start + w_len - 1);
            let clip_len = hi - lo + 1;
            let x1 = seq.latents.narrow0(lo, clip_len)?.detach();
            let cond = seq.conditions.narrow0(lo, clip_len)?.detach();
            let s: f64 = rng.random();
            let noise_seed: u64 = rng.random();
            let loss = fm_loss(
                &traced,
                &x1,
                &cond,
                center_abs - lo,
                s,
                noise_seed,
                lo as i64,
                cfg.supervision,
            )?;
            batch_loss = Some(match batch_loss {
                None => loss,
                Some(acc) => acc.add(&loss)?,
            });
        }
        let loss = batch_loss
            .expect("batch >= 1")
            .scale(1.0 / train.batch as f64);
        let loss_value = loss.item()?;
        if !loss_value.is_finite() {
            return Err(Error::Numeric(format!(
                "non-finite loss {loss_value} at step {step}"
            )));
        }
        trace.push((step, loss_value));

        let grads = loss.backward()?;
        let grad_vecs: Vec<Vec<f64>> = traced
            .params()
            .iter()
            .map(|(_, t)| {
                grads
                    .wrt(t)
                    .map(|g| g.to_vec())
                    .unwrap_or_else(|| vec![0.0; t.len()])
            })
            .collect();
        adam.step(&mut values, &grad_vecs);
        model.set_param_values(&values)?;
    }

    Ok(TrainResult {
        model,
        loss_trace: trace,
    })
}

/// Write a loss trace as `step,loss` CSV.
pub fn write_loss_csv(trace: &[(usize, f64)], path: &std::path::Path) -> Result<()> {
    use std::io::Write;
    let mut out = String::from("step,loss\n");
    for (step, loss) in trace {
        out.push_str(&format!("{step},{loss:.12e}\n"));
    }
    let mut file = std::fs::File::create(path)?;
    file.write_all(out.as_bytes())?;
    Ok(())
}

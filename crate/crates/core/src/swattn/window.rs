//! Windowed temporal attention over per-frame token sets.

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

use super::rope::{apply_rope, RotaryConfig};

/// Per-frame query/key/value token sets of shape `[T, N, D]`.
#[derive(Debug, Clone)]
pub struct FrameTokens<T: Scalar = f64> {
    pub q: Tensor<T>,
    pub k: Tensor<T>,
    pub v: Tensor<T>,
}

impl<T: Scalar> FrameTokens<T> {
    pub fn new(q: Tensor<T>, k: Tensor<T>, v: Tensor<T>) -> Result<Self> {
        if q.shape().len() != 3 {
            return Err(Error::ShapeMismatch(format!(
                "frame tokens must be [T, N, D], got {:?}",
                q.shape()
            )));
        }
        if q.shape() != k.shape() || q.shape() != v.shape() {
            return Err(Error::ShapeMismatch(format!(
                "Q/K/V shapes differ: {:?} {:?} {:?}",
                q.shape(),
                k.shape(),
                v.shape()
            )));
        }
        Ok(Self { q, k, v })
    }

    pub fn frames(&self) -> usize {
        self.q.shape()[0]
    }

    pub fn tokens_per_frame(&self) -> usize {
        self.q.shape()[1]
    }

    pub fn width(&self) -> usize {
        self.q.shape()[2]
    }
}

/// Which attention window applies where in a transformer stack.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize, PartialEq, Eq)]
pub struct WindowSpec {
    /// Half-width for windowed self-attention (window size `2w+1`).
    pub w_self: usize,
    /// Half-width for windowed cross-attention.
    pub w_cross: usize,
    /// Apply windowed self-attention every `stride`-th block (1 = every
    /// block, 2 = alternating). Windowed cross-attention takes the
    /// complementary blocks when the stride exceeds 1.
    pub self_stride: usize,
}

impl Default for WindowSpec {
    fn default() -> Self {
        // Cross window 5 with alternating self blocks.
        Self {
            w_self: 2,
            w_cross: 2,
            self_stride: 2,
        }
    }
}

impl WindowSpec {
    pub fn validate(&self) -> Result<()> {
        if self.self_stride == 0 {
            return Err(Error::InvalidInput("window stride must be >= 1".into()));
        }
        Ok(())
    }

    pub fn self_windowed(&self, block: usize) -> bool {
        block % self.self_stride == 0
    }

    pub fn cross_windowed(&self, block: usize) -> bool {
        if self.self_stride == 1 {
            true
        } else {
            block % self.self_stride != 0
        }
    }
}

/// Frames attended by frame `t`: `{tau : |tau - t| <= w}` clamped to
/// `[0, t_len)`, ascending.
pub fn window_indices(t: usize, w: usize, t_len: usize) -> Result<Vec<usize>> {
    if t >= t_len {
        return Err(Error::Contract(format!(
            "frame {t} out of range for sequence length {t_len}"
        )));
    }
    let lo = t.saturating_sub(w);
    let hi = (t + w).min(t_len - 1);
    Ok((lo..=hi).collect())
}

/// Scaled dot-product attention: `Softmax(Q K^T / sqrt(D)) V`.
pub fn vanilla_attention<T: Scalar>(
    q: &Tensor<T>,
    k: &Tensor<T>,
    v: &Tensor<T>,
) -> Result<Tensor<T>> {
    if q.shape().len() != 2 || k.shape().len() != 2 || v.shape().len() != 2 {
        return Err(Error::ShapeMismatch("attention operands must be rank 2".into()));
    }
    let d = q.shape()[1];
    if k.shape()[1] != d {
        return Err(Error::ShapeMismatch(format!(
            "query/key widths differ: {d} vs {}",
            k.shape()[1]
        )));
    }
    if k.shape()[0] != v.shape()[0] {
        return Err(Error::ShapeMismatch(format!(
            "key/value counts differ: {} vs {}",
            k.shape()[0],
            v.shape()[0]
        )));
    }
    let scale = T::from_f64(1.0 / (d as f64).sqrt());
    let scores = q.matmul(&k.transpose2()?)?.scale(scale);
    let weights = scores.softmax_lastdim()?;
    weights.matmul(v)
}

/// Diagnostics from a windowed attention evaluation.
#[derive(Debug, Clone)]
pub struct WindowStats {
    /// Softmax support (key count) per frame.
    pub key_counts: Vec<usize>,
    /// Largest deviation of any attention row sum from 1.
    pub max_row_sum_error: f64,
}

pub struct WindowedOutput<T: Scalar = f64> {
    pub output: Tensor<T>,
    pub stats: WindowStats,
}

/// Sliding-window temporal attention over `[T, N, D]` token sets.
///
/// For each frame `t`, queries are rotated by the frame-`t` phases, keys
/// of every frame in the window by their own frame's phases, and a single
/// softmax runs over all stacked keys. Values are never rotated.
/// `frame_offset` shifts the absolute frame indices seen by the rotary
/// encoding; outputs are invariant to it up to rounding.
pub fn windowed_attention_detailed<T: Scalar>(
    frames: &FrameTokens<T>,
    w: usize,
    cfg: &RotaryConfig,
    frame_offset: i64,
) -> Result<WindowedOutput<T>> {
    let t_len = frames.frames();
    let n = frames.tokens_per_frame();
    let d = frames.width();

    // Rotated keys are shared by overlapping windows; compute each once.
    let mut rotated_keys = Vec::with_capacity(t_len);
    for tau in 0..t_len {
        let k_tau = frames.k.narrow0(tau, 1)?.reshape(&[n, d])?;
        rotated_keys.push(apply_rope(&k_tau, frame_offset + tau as i64, cfg)?);
    }

    let scale = T::from_f64(1.0 / (d as f64).sqrt());
    let mut outputs = Vec::with_capacity(t_len);
    let mut key_counts = Vec::with_capacity(t_len);
    let mut max_row_sum_error = 0.0f64;

    for t in 0..t_len {
        let omega = window_indices(t, w, t_len)?;
        let q_t = frames.q.narrow0(t, 1)?.reshape(&[n, d])?;
        let q_rot = apply_rope(&q_t, frame_offset + t as i64, cfg)?;

        let k_parts: Vec<&Tensor<T>> = omega.iter().map(|&tau| &rotated_keys[tau]).collect();
        let k_win = Tensor::concat(&k_parts, 0)?;
        let v_parts: Vec<Tensor<T>> = omega
            .iter()
            .map(|&tau| frames.v.narrow0(tau, 1)?.reshape(&[n, d]))
            .collect::<Result<_>>()?;
        let v_refs: Vec<&Tensor<T>> = v_parts.iter().collect();
        let v_win = Tensor::concat(&v_refs, 0)?;

        let scores = q_rot.matmul(&k_win.transpose2()?)?.scale(scale);
        let weights = scores.softmax_lastdim()?;

        let cols = weights.shape()[1];
        key_counts.push(cols);
        for row in 0..weights.shape()[0] {
            let sum: f64 = (0..cols)
                .map(|c| weights.at(&[row, c]).to_f64())
                .sum();
            max_row_sum_error = max_row_sum_error.max((sum - 1.0).abs());
        }

        outputs.push(weights.matmul(&v_win)?.reshape(&[1, n, d])?);
    }

    let refs: Vec<&Tensor<T>> = outputs.iter().collect();
    Ok(WindowedOutput {
        output: Tensor::concat(&refs, 0)?,
        stats: WindowStats {
            key_counts,
            max_row_sum_error,
        },
    })
}

pub fn windowed_attention<T: Scalar>(
    frames: &FrameTokens<T>,
    w: usize,
    cfg: &RotaryConfig,
) -> Result<Tensor<T>> {
    Ok(windowed_attention_detailed(frames, w, cfg, 0)?.output)
}

/// Windowed cross-attention: queries come from the latent pathway, keys
/// and values from per-frame conditioning tokens (`[T, M, D]`). Mechanics
/// match [`windowed_attention`] with the window drawn over the
/// conditioning frames.
pub fn cross_windowed_attention<T: Scalar>(
    queries: &Tensor<T>,
    cond_keys: &Tensor<T>,
    cond_values: &Tensor<T>,
    w_cross: usize,
    cfg: &RotaryConfig,
    frame_offset: i64,
) -> Result<WindowedOutput<T>> {
    if queries.shape().len() != 3 || cond_keys.shape().len() != 3 {
        return Err(Error::ShapeMismatch("cross attention needs [T, N, D] operands".into()));
    }
    if cond_keys.shape() != cond_values.shape() {
        return Err(Error::ShapeMismatch(format!(
            "conditioning key/value shapes differ: {:?} vs {:?}",
            cond_keys.shape(),
            cond_values.shape()
        )));
    }
    let t_len = queries.shape()[0];
    if cond_keys.shape()[0] != t_len {
        return Err(Error::ShapeMismatch(format!(
            "query frames {t_len} vs conditioning frames {}",
            cond_keys.shape()[0]
        )));
    }
    let n = queries.shape()[1];
    let d = queries.shape()[2];
    if cond_keys.shape()[2] != d {
        return Err(Error::ShapeMismatch(format!(
            "query width {d} vs conditioning width {}",
            cond_keys.shape()[2]
        )));
    }
    let m = cond_keys.shape()[1];

    let mut rotated_keys = Vec::with_capacity(t_len);
    for tau in 0..t_len {
        let k_tau = cond_keys.narrow0(tau, 1)?.reshape(&[m, d])?;
        rotated_keys.push(apply_rope(&k_tau, frame_offset + tau as i64, cfg)?);
    }

    let scale = T::from_f64(1.0 / (d as f64).sqrt());
    let mut outputs = Vec::with_capacity(t_len);
    let mut key_counts = Vec::with_capacity(t_len);
    let mut max_row_sum_error = 0.0f64;

    for t in 0..t_len {
        let omega = window_indices(t, w_cross, t_len)?;
        let q_t = queries.narrow0(t, 1)?.reshape(&[n, d])?;
        let q_rot = apply_rope(&q_t, frame_offset + t as i64, cfg)?;

        let k_parts: Vec<&Tensor<T>> = omega.iter().map(|&tau| &rotated_keys[tau]).collect();
        let k_win = Tensor::concat(&k_parts, 0)?;
        let v_parts: Vec<Tensor<T>> = omega
            .iter()
            .map(|&tau| cond_values.narrow0(tau, 1)?.reshape(&[m, d]))
            .collect::<Result<_>>()?;
        let v_refs: Vec<&Tensor<T>> = v_parts.iter().collect();
        let v_win = Tensor::concat(&v_refs, 0)?;

        let scores = q_rot.matmul(&k_win.transpose2()?)?.scale(scale);
        let weights = scores.softmax_lastdim()?;
        let cols = weights.shape()[1];
        key_counts.push(cols);
        for row in 0..weights.shape()[0] {
            let sum: f64 = (0..cols)
                .map(|c| weights.at(&[row, c]).to_f64())
                .sum();
            max_row_sum_error = max_row_sum_error.max((sum - 1.0).abs());
        }
        outputs.push(weights.matmul(&v_win)?.reshape(&[1, n, d])?);
    }

    let refs: Vec<&Tensor<T>> = outputs.iter().collect();
    Ok(WindowedOutput {
        output: Tensor::concat(&refs, 0)?,
        stats: WindowStats {
            key_counts,
            max_row_sum_error,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_frames(seed: u64, t: usize, n: usize, d: usize) -> FrameTokens {
        FrameTokens::new(
            Tensor::<f64>::gaussian(&[t, n, d], seed, 0.0, 1.0).unwrap(),
            Tensor::<f64>::gaussian(&[t, n, d], seed + 1, 0.0, 1.0).unwrap(),
            Tensor::<f64>::gaussian(&[t, n, d], seed + 2, 0.0, 1.0).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn window_indices_interior() {
        assert_eq!(window_indices(5, 2, 100).unwrap(), vec![3, 4, 5, 6, 7]);
    }

    #[test]
    fn window_indices_clamped_at_start() {
        assert_eq!(window_indices(0, 2, 100).unwrap(), vec![0, 1, 2]);
    }

    #[test]
    fn window_indices_zero_width() {
        assert_eq!(window_indices(7, 0, 10).unwrap(), vec![7]);
    }

    #[test]
    fn window_indices_out_of_range() {
        assert!(matches!(
            window_indices(10, 2, 10),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn vanilla_single_key_returns_value() {
        let q = Tensor::<f64>::gaussian(&[3, 4], 1, 0.0, 1.0).unwrap();
        let k = Tensor::<f64>::gaussian(&[1, 4], 2, 0.0, 1.0).unwrap();
        let v = Tensor::<f64>::gaussian(&[1, 4], 3, 0.0, 1.0).unwrap();
        let out = vanilla_attention(&q, &k, &v).unwrap();
        for row in 0..3 {
            for c in 0..4 {
                assert_eq!(out.at(&[row, c]), v.at(&[0, c]));
            }
        }
    }

    #[test]
    fn vanilla_identical_keys_average_values() {
        let q = Tensor::<f64>::gaussian(&[2, 4], 4, 0.0, 1.0).unwrap();
        let k_row = Tensor::<f64>::gaussian(&[1, 4], 5, 0.0, 1.0).unwrap();
        let k = Tensor::concat(&[&k_row, &k_row, &k_row], 0).unwrap();
        let v = Tensor::<f64>::gaussian(&[3, 4], 6, 0.0, 1.0).unwrap();
        let out = vanilla_attention(&q, &k, &v).unwrap();
        for row in 0..2 {
            for c in 0..4 {
                let mean = (v.at(&[0, c]) + v.at(&[1, c]) + v.at(&[2, c])) / 3.0;
                assert!((out.at(&[row, c]) - mean).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn vanilla_matches_scalar_loop() {
        let (n, m, d) = (3, 4, 6);
        let q = Tensor::<f64>::gaussian(&[n, d], 7, 0.0, 1.0).unwrap();
        let k = Tensor::<f64>::gaussian(&[m, d], 8, 0.0, 1.0).unwrap();
        let v = Tensor::<f64>::gaussian(&[m, d], 9, 0.0, 1.0).unwrap();
        let out = vanilla_attention(&q, &k, &v).unwrap();
        let scale = 1.0 / (d as f64).sqrt();
        for i in 0..n {
            let scores: Vec<f64> = (0..m)
                .map(|j| {
                    (0..d).map(|c| q.at(&[i, c]) * k.at(&[j, c])).sum::<f64>() * scale
                })
                .collect();
            let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
            let z: f64 = exps.iter().sum();
            for c in 0..d {
                let expect: f64 =
                    (0..m).map(|j| exps[j] / z * v.at(&[j, c])).sum();
                assert!((out.at(&[i, c]) - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn lossless_at_zero_window() {
        for seed in 0..12u64 {
            let frames = random_frames(seed * 10, 4, 3, 8);
            let cfg = RotaryConfig::new(8).unwrap();
            let windowed = windowed_attention(&frames, 0, &cfg).unwrap();
            for t in 0..4 {
                let q = frames.q.narrow0(t, 1).unwrap().reshape(&[3, 8]).unwrap();
                let k = frames.k.narrow0(t, 1).unwrap().reshape(&[3, 8]).unwrap();
                let v = frames.v.narrow0(t, 1).unwrap().reshape(&[3, 8]).unwrap();
                let plain = vanilla_attention(&q, &k, &v).unwrap();
                for i in 0..3 {
                    for c in 0..8 {
                        let diff = (windowed.at(&[t, i, c]) - plain.at(&[i, c])).abs();
                        assert!(diff < 1e-10, "W=0 deviates by {diff}");
                    }
                }
            }
        }
    }

    #[test]
    fn interior_key_count_scaling() {
        let frames = random_frames(3, 9, 2, 4);
        let cfg = RotaryConfig::new(4).unwrap();
        for w in [0usize, 1, 2, 4] {
            let out = windowed_attention_detailed(&frames, w, &cfg, 0).unwrap();
            assert_eq!(out.stats.key_counts[4], (2 * w + 1) * 2);
        }
    }

    #[test]
    fn attention_rows_normalize() {
        let frames = random_frames(5, 6, 3, 8);
        let cfg = RotaryConfig::new(8).unwrap();
        let out = windowed_attention_detailed(&frames, 2, &cfg, 0).unwrap();
        assert!(out.stats.max_row_sum_error < 1e-12);
    }

    #[test]
    fn shift_equivariance() {
        let frames = random_frames(8, 6, 2, 8);
        let cfg = RotaryConfig::new(8).unwrap();
        let base = windowed_attention_detailed(&frames, 2, &cfg, 0)
            .unwrap()
            .output;
        for offset in [1i64, 17, 1000] {
            let shifted = windowed_attention_detailed(&frames, 2, &cfg, offset)
                .unwrap()
                .output;
            let mut max_diff = 0.0f64;
            for (a, b) in base.data().iter().zip(shifted.data()) {
                max_diff = max_diff.max((a - b).abs());
            }
            assert!(max_diff < 1e-9, "offset {offset} shifts outputs by {max_diff}");
        }
    }

    #[test]
    fn cross_zero_window_matches_vanilla() {
        let t_len = 4;
        let (n, m, d) = (3, 5, 8);
        let q = Tensor::<f64>::gaussian(&[t_len, n, d], 40, 0.0, 1.0).unwrap();
        let ck = Tensor::<f64>::gaussian(&[t_len, m, d], 41, 0.0, 1.0).unwrap();
        let cv = Tensor::<f64>::gaussian(&[t_len, m, d], 42, 0.0, 1.0).unwrap();
        let cfg = RotaryConfig::new(d).unwrap();
        let out = cross_windowed_attention(&q, &ck, &cv, 0, &cfg, 0).unwrap();
        for t in 0..t_len {
            let qt = q.narrow0(t, 1).unwrap().reshape(&[n, d]).unwrap();
            let kt = ck.narrow0(t, 1).unwrap().reshape(&[m, d]).unwrap();
            let vt = cv.narrow0(t, 1).unwrap().reshape(&[m, d]).unwrap();
            let plain = vanilla_attention(&qt, &kt, &vt).unwrap();
            for i in 0..n {
                for c in 0..d {
                    assert!((out.output.at(&[t, i, c]) - plain.at(&[i, c])).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn cross_single_frame_collapses() {
        let (n, m, d) = (2, 3, 4);
        let q = Tensor::<f64>::gaussian(&[1, n, d], 50, 0.0, 1.0).unwrap();
        let ck = Tensor::<f64>::gaussian(&[1, m, d], 51, 0.0, 1.0).unwrap();
        let cv = Tensor::<f64>::gaussian(&[1, m, d], 52, 0.0, 1.0).unwrap();
        let cfg = RotaryConfig::new(d).unwrap();
        for w in [0usize, 3, 10] {
            let out = cross_windowed_attention(&q, &ck, &cv, w, &cfg, 0).unwrap();
            assert_eq!(out.stats.key_counts, vec![m]);
            assert!(out.output.is_finite());
        }
    }

    #[test]
    fn cross_interior_key_count() {
        let (t_len, n, m, d) = (9, 2, 3, 4);
        let q = Tensor::<f64>::gaussian(&[t_len, n, d], 60, 0.0, 1.0).unwrap();
        let ck = Tensor::<f64>::gaussian(&[t_len, m, d], 61, 0.0, 1.0).unwrap();
        let cv = Tensor::<f64>::gaussian(&[t_len, m, d], 62, 0.0, 1.0).unwrap();
        let cfg = RotaryConfig::new(d).unwrap();
        for w in [0usize, 1, 2] {
            let out = cross_windowed_attention(&q, &ck, &cv, w, &cfg, 0).unwrap();
            assert_eq!(out.stats.key_counts[4], (2 * w + 1) * m);
        }
    }

    #[test]
    fn windowed_attention_is_differentiable() {
        use crate::tensor::{grad_check, Tensor};
        let cfg = RotaryConfig::new(4).unwrap();
        let k = Tensor::<f64>::gaussian(&[3, 2, 4], 71, 0.0, 1.0).unwrap();
        let v = Tensor::<f64>::gaussian(&[3, 2, 4], 72, 0.0, 1.0).unwrap();
        let q0 = Tensor::<f64>::gaussian(&[3, 2, 4], 70, 0.0, 1.0).unwrap();
        let err = grad_check(
            |q: &Tensor| {
                let frames = FrameTokens::new(q.clone(), k.clone(), v.clone())?;
                Ok(windowed_attention(&frames, 1, &cfg)?.sum())
            },
            &q0,
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-6, "max rel error {err}");
    }
}

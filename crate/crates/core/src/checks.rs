//! Self-contained property suite behind the `check` subcommand.
//!
//! Each check returns a human-readable outcome; the CLI prints one line
//! per property and fails the run when any check fails.

use std::time::Instant;

use crate::error::Result;
use crate::flowmatch::{
    euler_sample, fm_loss, unit_sphere_mesh, Supervision, ToyDiT, ToyDiTConfig,
    VelocityField, WindowOverride,
};
use crate::meshio::{Centering, MeshSequence};
use crate::metrics::{
    chamfer, delta_cd, dtw_from_cost, f_score, occupancy_kl, sample_surface,
    temporal_feature_compare, FeatureTrack, PointCloud,
};
use crate::swattn::{
    apply_rope, vanilla_attention, windowed_attention_detailed, FrameTokens, RotaryConfig,
    StreamingAttention,
};
use crate::tensor::{grad_check, Tensor};
use crate::trajectory::{
    adaptive_total_loss_t, dice_loss, optimize_trajectory, rasterize_silhouette, splat_mask,
    CameraParams, LossWeights, MaskImage, TrackOptions,
};

#[derive(Debug, Clone)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

fn outcome(name: &str, passed: bool, detail: impl Into<String>) -> CheckOutcome {
    CheckOutcome {
        name: name.to_string(),
        passed,
        detail: detail.into(),
    }
}

fn run(name: &str, f: impl FnOnce() -> Result<(bool, String)>) -> CheckOutcome {
    match f() {
        Ok((passed, detail)) => outcome(name, passed, detail),
        Err(e) => outcome(name, false, format!("errored: {e}")),
    }
}

/// Attention implementation under test for the lossless property; the
/// mutation tests inject faulty variants through this hook.
pub type WindowedAttentionFn = dyn Fn(&FrameTokens, usize, &RotaryConfig) -> Result<Tensor>;

/// Max |windowed(w=0) - per-frame vanilla| over randomized shapes.
pub fn lossless_w0_deviation(attn: &WindowedAttentionFn, seed: u64, cases: usize) -> Result<f64> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut max_diff = 0.0f64;
    for case in 0..cases {
        let t_len = rng.random_range(1..=8);
        let n = rng.random_range(1..=16);
        let d = *[4usize, 8, 32]
            .get(rng.random_range(0..3))
            .expect("three widths");
        let base = seed.wrapping_mul(1000).wrapping_add(case as u64 * 3);
        let frames = FrameTokens::new(
            Tensor::<f64>::gaussian(&[t_len, n, d], base, 0.0, 1.0)?,
            Tensor::<f64>::gaussian(&[t_len, n, d], base + 1, 0.0, 1.0)?,
            Tensor::<f64>::gaussian(&[t_len, n, d], base + 2, 0.0, 1.0)?,
        )?;
        let cfg = RotaryConfig::new(d)?;
        let windowed = attn(&frames, 0, &cfg)?;
        for t in 0..t_len {
            let q = frames.q.narrow0(t, 1)?.reshape(&[n, d])?;
            let k = frames.k.narrow0(t, 1)?.reshape(&[n, d])?;
            let v = frames.v.narrow0(t, 1)?.reshape(&[n, d])?;
            let plain = vanilla_attention(&q, &k, &v)?;
            for i in 0..n {
                for c in 0..d {
                    max_diff = max_diff.max((windowed.at(&[t, i, c]) - plain.at(&[i, c])).abs());
                }
            }
        }
    }
    Ok(max_diff)
}

pub fn reference_windowed_attention(
    frames: &FrameTokens,
    w: usize,
    cfg: &RotaryConfig,
) -> Result<Tensor> {
    Ok(windowed_attention_detailed(frames, w, cfg, 0)?.output)
}

fn check_gradcheck_ops(seed: u64) -> Result<(bool, String)> {
    let mut worst: (f64, &'static str) = (0.0, "none");
    let mut track = |name: &'static str, err: f64| {
        if err > worst.0 {
            worst = (err, name);
        }
    };
    for s in 0..20u64 {
        let base = seed.wrapping_add(s * 97);
        let x = Tensor::<f64>::gaussian(&[6], base, 0.0, 1.0)?;
        let y = Tensor::<f64>::gaussian(&[6], base + 1, 0.3, 0.8)?;
        let probe = Tensor::<f64>::gaussian(&[6], base + 2, 0.0, 1.0)?;

        track("add", grad_check(|x| Ok(x.add(&y)?.mul(&probe)?.sum()), &x, 1e-5)?);
        track("sub", grad_check(|x| Ok(x.sub(&y)?.mul(&probe)?.sum()), &x, 1e-5)?);
        track("mul", grad_check(|x| Ok(x.mul(&y)?.mul(&probe)?.sum()), &x, 1e-5)?);
        let y_safe = y.clamp(0.2, 10.0).shift(0.5);
        track("div", grad_check(|x| Ok(x.div(&y_safe)?.mul(&probe)?.sum()), &x, 1e-5)?);
        track("scale_shift", grad_check(|x| Ok(x.scale(2.5).shift(-0.7).mul(&probe)?.sum()), &x, 1e-5)?);
        track("softmax", grad_check(|x| Ok(x.softmax_lastdim()?.mul(&probe)?.sum()), &x, 1e-5)?);
        track("layer_norm", grad_check(|x| Ok(x.layer_norm(1e-5)?.mul(&probe)?.sum()), &x, 1e-5)?);
        track("silu", grad_check(|x| Ok(x.silu().mul(&probe)?.sum()), &x, 1e-5)?);
        track("sigmoid", grad_check(|x| Ok(x.sigmoid().mul(&probe)?.sum()), &x, 1e-5)?);
        track("exp", grad_check(|x| Ok(x.exp().mul(&probe)?.sum()), &x, 1e-5)?);
        track("log", grad_check(|x| Ok(x.shift(5.0).log().mul(&probe)?.sum()), &x, 1e-5)?);
        track("mean", grad_check(|x| Ok(x.mul(x)?.mean()), &x, 1e-5)?);

        let a = Tensor::<f64>::gaussian(&[3, 4], base + 3, 0.0, 1.0)?;
        let b = Tensor::<f64>::gaussian(&[4, 2], base + 4, 0.0, 1.0)?;
        track("matmul_lhs", grad_check(|a| Ok(a.matmul(&b)?.sum()), &a, 1e-5)?);
        let a_fixed = a.detach();
        track("matmul_rhs", grad_check(|b| Ok(a_fixed.matmul(b)?.sum()), &b, 1e-5)?);

        let m = Tensor::<f64>::gaussian(&[4, 3], base + 5, 0.0, 1.0)?;
        track(
            "reshape_transpose_narrow",
            grad_check(
                |m| Ok(m.reshape(&[3, 4])?.transpose2()?.narrow0(1, 2)?.mul(&m.reshape(&[3,4])?.transpose2()?.narrow0(1, 2)?)?.sum()),
                &m,
                1e-5,
            )?,
        );
        let other = Tensor::<f64>::gaussian(&[2, 3], base + 6, 0.0, 1.0)?;
        track(
            "concat",
            grad_check(
                |m| {
                    let c = Tensor::concat(&[&m.reshape(&[4, 3])?, &other], 0)?;
                    Ok(c.mul(&c)?.sum())
                },
                &m,
                1e-5,
            )?,
        );

        // Clamp with the kink far from sampled values.
        let x_clamp = x.scale(0.5);
        track("clamp", grad_check(|x| Ok(x.clamp(-4.0, 4.0).mul(&probe)?.sum()), &x_clamp, 1e-5)?);

        let rope_cfg = RotaryConfig::new(6)?;
        let probe_r = Tensor::<f64>::gaussian(&[1, 6], base + 7, 0.0, 1.0)?;
        let x_r = Tensor::<f64>::gaussian(&[1, 6], base + 8, 0.0, 1.0)?;
        track(
            "rope",
            grad_check(
                |x| Ok(apply_rope(x, 13 - s as i64, &rope_cfg)?.mul(&probe_r)?.sum()),
                &x_r,
                1e-5,
            )?,
        );
    }
    Ok((
        worst.0 < 1e-6,
        format!("max rel error {:.2e} ({})", worst.0, worst.1),
    ))
}

fn check_matmul_oracle(seed: u64) -> Result<(bool, String)> {
    let mut max_diff = 0.0f64;
    for m in 1..=8usize {
        for k in 1..=8usize {
            for n in 1..=8usize {
                let a = Tensor::<f64>::gaussian(&[m, k], seed.wrapping_add((m * 64 + k) as u64), 0.0, 1.0)?;
                let b = Tensor::<f64>::gaussian(&[k, n], seed.wrapping_add((k * 64 + n + 7) as u64), 0.0, 1.0)?;
                let c = a.matmul(&b)?;
                for i in 0..m {
                    for j in 0..n {
                        let mut acc = 0.0;
                        for p in 0..k {
                            acc += a.at(&[i, p]) * b.at(&[p, j]);
                        }
                        max_diff = max_diff.max((c.at(&[i, j]) - acc).abs());
                    }
                }
            }
        }
    }
    Ok((max_diff < 1e-12, format!("max |impl - oracle| = {max_diff:.2e}")))
}

fn check_softmax_properties(seed: u64) -> Result<(bool, String)> {
    let mut worst = 0.0f64;
    for s in 0..20u64 {
        let x = Tensor::<f64>::gaussian(&[4, 7], seed.wrapping_add(s), 0.0, 3.0)?;
        let y = x.softmax_lastdim()?;
        for row in 0..4 {
            let sum: f64 = (0..7).map(|c| y.at(&[row, c])).sum();
            worst = worst.max((sum - 1.0).abs());
            for c in 0..7 {
                if y.at(&[row, c]) < 0.0 {
                    return Ok((false, "negative softmax output".into()));
                }
            }
        }
        let shifted = x.shift(11.25).softmax_lastdim()?;
        for (a, b) in y.data().iter().zip(shifted.data()) {
            worst = worst.max((a - b).abs());
        }
    }
    Ok((worst < 1e-12, format!("max deviation {worst:.2e}")))
}

fn check_gradient_accumulation(_seed: u64) -> Result<(bool, String)> {
    let tape = crate::tensor::Tape::new();
    let x = Tensor::scalar(1.25).watch(&tape);
    let grads = x.add(&x)?.backward()?;
    let g = grads.wrt(&x).expect("on tape").item()?;
    Ok((g == 2.0, format!("d(x+x)/dx = {g}")))
}

fn check_lossless_w0(seed: u64) -> Result<(bool, String)> {
    let max_diff = lossless_w0_deviation(&reference_windowed_attention, seed, 50)?;
    Ok((max_diff < 1e-10, format!("max |windowed - vanilla| = {max_diff:.2e}")))
}

fn check_rope_norms(seed: u64) -> Result<(bool, String)> {
    let cfg = RotaryConfig::new(16)?;
    let mut worst = 0.0f64;
    for s in 0..30u64 {
        let x = Tensor::<f64>::gaussian(&[5, 16], seed.wrapping_add(s), 0.0, 2.0)?;
        let t = (s as i64 - 15) * 700;
        let y = apply_rope(&x, t, &cfg)?;
        for row in 0..5 {
            let nx: f64 = (0..16).map(|c| x.at(&[row, c]).powi(2)).sum::<f64>().sqrt();
            let ny: f64 = (0..16).map(|c| y.at(&[row, c]).powi(2)).sum::<f64>().sqrt();
            worst = worst.max((nx - ny).abs());
        }
    }
    Ok((worst < 1e-12, format!("max norm drift {worst:.2e}")))
}

fn check_relative_time_identity(seed: u64) -> Result<(bool, String)> {
    let cfg = RotaryConfig::new(8)?;
    let mut worst = 0.0f64;
    for s in 0..30u64 {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed.wrapping_add(s));
        let t: i64 = rng.random_range(-10_000..=10_000);
        let d: i64 = rng.random_range(-10_000..=10_000);
        let q = Tensor::<f64>::gaussian(&[1, 8], seed.wrapping_add(s * 2 + 1), 0.0, 1.0)?;
        let k = Tensor::<f64>::gaussian(&[1, 8], seed.wrapping_add(s * 2 + 2), 0.0, 1.0)?;
        let lhs: f64 = apply_rope(&q, t, &cfg)?
            .data()
            .iter()
            .zip(apply_rope(&k, t + d, &cfg)?.data())
            .map(|(a, b)| a * b)
            .sum();
        let rhs: f64 = q
            .data()
            .iter()
            .zip(apply_rope(&k, d, &cfg)?.data())
            .map(|(a, b)| a * b)
            .sum();
        worst = worst.max((lhs - rhs).abs());
    }
    Ok((worst < 1e-10, format!("max identity drift {worst:.2e}")))
}

fn check_attention_row_sums(seed: u64) -> Result<(bool, String)> {
    let cfg = RotaryConfig::new(8)?;
    let frames = FrameTokens::new(
        Tensor::<f64>::gaussian(&[6, 4, 8], seed, 0.0, 1.0)?,
        Tensor::<f64>::gaussian(&[6, 4, 8], seed + 1, 0.0, 1.0)?,
        Tensor::<f64>::gaussian(&[6, 4, 8], seed + 2, 0.0, 1.0)?,
    )?;
    let out = windowed_attention_detailed(&frames, 2, &cfg, 0)?;
    Ok((
        out.stats.max_row_sum_error < 1e-12,
        format!("max |row sum - 1| = {:.2e}", out.stats.max_row_sum_error),
    ))
}

fn check_shift_equivariance(seed: u64) -> Result<(bool, String)> {
    let cfg = RotaryConfig::new(8)?;
    let frames = FrameTokens::new(
        Tensor::<f64>::gaussian(&[6, 3, 8], seed, 0.0, 1.0)?,
        Tensor::<f64>::gaussian(&[6, 3, 8], seed + 1, 0.0, 1.0)?,
        Tensor::<f64>::gaussian(&[6, 3, 8], seed + 2, 0.0, 1.0)?,
    )?;
    let base = windowed_attention_detailed(&frames, 2, &cfg, 0)?.output;
    let mut worst = 0.0f64;
    for offset in [1i64, 17, 1000] {
        let shifted = windowed_attention_detailed(&frames, 2, &cfg, offset)?.output;
        for (a, b) in base.data().iter().zip(shifted.data()) {
            worst = worst.max((a - b).abs());
        }
    }
    Ok((worst < 1e-9, format!("max output drift {worst:.2e}")))
}

fn check_streaming_equivalence(seed: u64) -> Result<(bool, String)> {
    let (t_len, n, d, w) = (64usize, 3usize, 8usize, 2usize);
    let cfg = RotaryConfig::new(d)?;
    let frames = FrameTokens::new(
        Tensor::<f64>::gaussian(&[t_len, n, d], seed, 0.0, 1.0)?,
        Tensor::<f64>::gaussian(&[t_len, n, d], seed + 1, 0.0, 1.0)?,
        Tensor::<f64>::gaussian(&[t_len, n, d], seed + 2, 0.0, 1.0)?,
    )?;
    let batch = windowed_attention_detailed(&frames, w, &cfg, 0)?.output;
    let mut stream = StreamingAttention::new(w, cfg);
    let mut outs: Vec<Option<Tensor>> = vec![None; t_len];
    for t in 0..t_len {
        let q = frames.q.narrow0(t, 1)?.reshape(&[n, d])?;
        let k = frames.k.narrow0(t, 1)?.reshape(&[n, d])?;
        let v = frames.v.narrow0(t, 1)?.reshape(&[n, d])?;
        if let Some((u, o)) = stream.push(t, &q, &k, &v)? {
            outs[u] = Some(o);
        }
    }
    for (u, o) in stream.finish()? {
        outs[u] = Some(o);
    }
    let mut worst = 0.0f64;
    for (t, out) in outs.iter().enumerate() {
        let out = out.as_ref().expect("emitted");
        for i in 0..n {
            for c in 0..d {
                worst = worst.max((batch.at(&[t, i, c]) - out.at(&[i, c])).abs());
            }
        }
    }
    Ok((worst < 1e-10, format!("max frame deviation {worst:.2e}")))
}

fn check_cache_bound(seed: u64) -> Result<(bool, String)> {
    let (n, d, w) = (4usize, 8usize, 2usize);
    let cfg = RotaryConfig::new(d)?;
    let mut stream = StreamingAttention::new(w, cfg);
    for t in 0..10_000usize {
        let base = seed.wrapping_add(t as u64 * 3);
        let q = Tensor::<f64>::gaussian(&[n, d], base, 0.0, 1.0)?;
        let k = Tensor::<f64>::gaussian(&[n, d], base + 1, 0.0, 1.0)?;
        let v = Tensor::<f64>::gaussian(&[n, d], base + 2, 0.0, 1.0)?;
        stream.push(t, &q, &k, &v)?;
    }
    stream.finish()?;
    let peak_frames = stream.cache().peak_frames();
    let peak_keys = stream.cache().peak_keys();
    Ok((
        peak_frames <= 2 * w + 1 && peak_keys <= (2 * w + 1) * n,
        format!("peak {peak_frames} frames / {peak_keys} keys over T=10000"),
    ))
}

fn check_linear_cost(seed: u64) -> Result<(bool, String)> {
    let (t_len, n, d) = (64usize, 8usize, 32usize);
    let cfg = RotaryConfig::new(d)?;
    let frames = FrameTokens::new(
        Tensor::<f64>::gaussian(&[t_len, n, d], seed, 0.0, 1.0)?,
        Tensor::<f64>::gaussian(&[t_len, n, d], seed + 1, 0.0, 1.0)?,
        Tensor::<f64>::gaussian(&[t_len, n, d], seed + 2, 0.0, 1.0)?,
    )?;
    let widths = [0usize, 1, 2, 4, 8];
    let mut times = Vec::with_capacity(widths.len());
    let mut peak_keys = Vec::with_capacity(widths.len());
    for &w in &widths {
        let mut best = f64::INFINITY;
        let mut keys = 0usize;
        for _ in 0..5 {
            let t0 = Instant::now();
            let out = windowed_attention_detailed(&frames, w, &cfg, 0)?;
            best = best.min(t0.elapsed().as_secs_f64());
            keys = *out.stats.key_counts.iter().max().expect("frames");
        }
        times.push(best);
        peak_keys.push(keys);
    }
    // Least-squares linear fits in W.
    let fit = |ys: &[f64]| -> (f64, f64) {
        let xs: Vec<f64> = widths.iter().map(|&w| w as f64).collect();
        let n = xs.len() as f64;
        let sx: f64 = xs.iter().sum();
        let sy: f64 = ys.iter().sum();
        let sxx: f64 = xs.iter().map(|x| x * x).sum();
        let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| x * y).sum();
        let b = (n * sxy - sx * sy) / (n * sxx - sx * sx);
        let a = (sy - b * sx) / n;
        (a, b)
    };
    let (ta, tb) = fit(&times);
    let key_f64: Vec<f64> = peak_keys.iter().map(|&k| k as f64).collect();
    let (ka, kb) = fit(&key_f64);
    let mut worst_rel = 0.0f64;
    for (i, &w) in widths.iter().enumerate() {
        let t_fit = ta + tb * w as f64;
        let k_fit = ka + kb * w as f64;
        worst_rel = worst_rel.max(((times[i] - t_fit) / t_fit).abs());
        worst_rel = worst_rel.max(((key_f64[i] - k_fit) / k_fit).abs());
    }
    // Wall time is nondeterministic; keep the printed detail stable so
    // repeated `check` runs produce identical logs.
    Ok((
        worst_rel < 0.2,
        format!(
            "peak keys {:?}; wall time within 20% of a linear fit",
            peak_keys
        ),
    ))
}

struct PerfectField {
    x1: Tensor,
    noise_seed: u64,
}

impl VelocityField for PerfectField {
    fn velocity(
        &self,
        _x: &Tensor,
        _cond: &Tensor,
        _s: f64,
        offset: i64,
        _w: Option<WindowOverride>,
    ) -> Result<Tensor> {
        let shape = self.x1.shape();
        let mut frames = Vec::new();
        for t in 0..shape[0] {
            frames.push(Tensor::<f64>::gaussian(
                &[1, shape[1], shape[2]],
                crate::flowmatch::frame_noise_seed(self.noise_seed, offset + t as i64),
                0.0,
                1.0,
            )?);
        }
        let refs: Vec<&Tensor> = frames.iter().collect();
        let x0 = Tensor::concat(&refs, 0)?;
        self.x1.sub(&x0)
    }
}

fn check_fm_loss_identities(seed: u64) -> Result<(bool, String)> {
    let x1 = Tensor::<f64>::gaussian(&[5, 3, 8], seed, 0.0, 2.0)?;
    let cond = Tensor::<f64>::gaussian(&[5, 2, 8], seed + 1, 0.0, 1.0)?;
    let field = PerfectField {
        x1: x1.clone(),
        noise_seed: seed + 9,
    };
    let loss = fm_loss(&field, &x1, &cond, 2, 0.4, seed + 9, 0, Supervision::CenterFrame)?
        .item()?;
    Ok((loss == 0.0, format!("perfect-predictor loss = {loss:.2e}")))
}

struct LinearPathField {
    x1: Tensor,
}

impl VelocityField for LinearPathField {
    fn velocity(
        &self,
        x: &Tensor,
        _cond: &Tensor,
        s: f64,
        _offset: i64,
        _w: Option<WindowOverride>,
    ) -> Result<Tensor> {
        Ok(self.x1.sub(x)?.scale(1.0 / (1.0 - s)))
    }
}

fn check_euler_linear_path(seed: u64) -> Result<(bool, String)> {
    let (l, d) = (3usize, 8usize);
    let x1 = Tensor::<f64>::gaussian(&[4, l, d], seed, 0.0, 2.0)?;
    let cond = Tensor::<f64>::zeros(&[4, 1, d])?;
    let field = LinearPathField { x1: x1.clone() };
    let out = euler_sample(&field, &cond, l, d, 64, None, seed + 1, 0)?;
    let mut worst = 0.0f64;
    for (a, b) in out.data().iter().zip(x1.data()) {
        worst = worst.max((a - b).abs());
    }
    Ok((worst < 1e-6, format!("terminal miss {worst:.2e}")))
}

fn check_euler_determinism(seed: u64) -> Result<(bool, String)> {
    let cfg = ToyDiTConfig {
        blocks: 2,
        width: 8,
        latent_tokens: 3,
        cond_tokens: 2,
        time_embed_width: 8,
        ffn_mult: 2,
        ..Default::default()
    };
    let model = ToyDiT::new(cfg.clone(), seed)?;
    let cond = Tensor::<f64>::gaussian(&[5, 2, 8], seed + 1, 0.0, 1.0)?;
    let a = euler_sample(&model, &cond, 3, 8, 8, None, seed + 2, 0)?;
    let b = euler_sample(&model, &cond, 3, 8, 8, None, seed + 2, 0)?;
    Ok((a.to_vec() == b.to_vec(), "bitwise equality".to_string()))
}

fn check_fm_loss_gradient(seed: u64) -> Result<(bool, String)> {
    let cfg = ToyDiTConfig {
        blocks: 2,
        width: 8,
        latent_tokens: 3,
        cond_tokens: 2,
        time_embed_width: 8,
        ffn_mult: 2,
        ..Default::default()
    };
    let mut model = ToyDiT::new(cfg.clone(), seed)?;
    // Random head so the output path carries signal.
    let mut values = model.param_values();
    let n = values.len();
    values[n - 2] = Tensor::<f64>::gaussian(&[8, 8], seed + 50, 0.0, 0.3)?.to_vec();
    model.set_param_values(&values)?;

    let x1 = Tensor::<f64>::gaussian(&[3, 3, 8], seed + 2, 0.0, 1.5)?;
    let cond = Tensor::<f64>::gaussian(&[3, 2, 8], seed + 3, 0.0, 1.0)?;
    let mut worst: (f64, String) = (0.0, String::new());
    for (idx, (name, tensor)) in model.params().iter().enumerate() {
        // Finite differences over every full tensor is slow; probe a
        // representative subset each run.
        if !(name.contains("blk0") || name.starts_with("head") || name.starts_with("time")) {
            continue;
        }
        if tensor.len() > 80 {
            continue;
        }
        let err = grad_check(
            |p: &Tensor| {
                // Swap in the probed tensor (traced or plain); the forward
                // pass records through it either way.
                let mut ps: Vec<(String, Tensor)> = model.params().to_vec();
                ps[idx] = (ps[idx].0.clone(), p.clone());
                let probe_model = ToyDiT::from_parts(model.config().clone(), ps)?;
                fm_loss(&probe_model, &x1, &cond, 1, 0.35, seed + 4, 0, Supervision::CenterFrame)
            },
            tensor,
            1e-5,
        )?;
        if err > worst.0 {
            worst = (err, name.clone());
        }
    }
    Ok((
        worst.0 < 1e-5,
        format!("max rel error {:.2e} ({})", worst.0, worst.1),
    ))
}

fn check_weight_inheritance(seed: u64) -> Result<(bool, String)> {
    let cfg = ToyDiTConfig {
        blocks: 2,
        width: 8,
        latent_tokens: 3,
        cond_tokens: 2,
        time_embed_width: 8,
        ffn_mult: 2,
        ..Default::default()
    };
    let mut model = ToyDiT::new(cfg.clone(), seed)?;
    let mut values = model.param_values();
    let n = values.len();
    values[n - 2] = Tensor::<f64>::gaussian(&[8, 8], seed + 51, 0.0, 0.3)?.to_vec();
    model.set_param_values(&values)?;
    let x = Tensor::<f64>::gaussian(&[4, 3, 8], seed + 1, 0.0, 1.0)?;
    let cond = Tensor::<f64>::gaussian(&[4, 2, 8], seed + 2, 0.0, 1.0)?;
    let windowed = model.velocity(
        &x,
        &cond,
        0.6,
        0,
        Some(WindowOverride { w_self: 0, w_cross: 0 }),
    )?;
    let plain = model.plain_per_frame_forward(&x, &cond, 0.6)?;
    let mut worst = 0.0f64;
    for (a, b) in windowed.data().iter().zip(plain.data()) {
        worst = worst.max((a - b).abs());
    }
    Ok((worst < 1e-10, format!("max |windowed(0) - plain| = {worst:.2e}")))
}

fn check_trajectory_losses(seed: u64) -> Result<(bool, String)> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let weights = LossWeights::default();
    let mut worst_sym = 0.0f64;
    for _ in 0..10 {
        let a: Vec<f64> = (0..64).map(|_| rng.random()).collect();
        let b: Vec<f64> = (0..64).map(|_| rng.random()).collect();
        let ma = MaskImage::new(8, 8, a)?;
        let mb = MaskImage::new(8, 8, b)?;
        let losses = [
            crate::trajectory::bce_loss(&ma, &mb)?,
            dice_loss(&ma, &mb)?,
            crate::trajectory::adaptive_total_loss(&ma, &mb, &weights)?.0,
        ];
        if losses.iter().any(|l| !l.is_finite() || *l < 0.0) {
            return Ok((false, format!("non-finite or negative loss: {losses:?}")));
        }
        worst_sym = worst_sym.max((dice_loss(&ma, &mb)? - dice_loss(&mb, &ma)?).abs());
    }
    Ok((worst_sym < 1e-12, format!("dice symmetry drift {worst_sym:.2e}")))
}

fn check_adaptive_gradient(seed: u64) -> Result<(bool, String)> {
    let cam = CameraParams::centered(64, 64, 80.0);
    let mesh = unit_sphere_mesh(1).map_vertices(|v| [0.5 * v[0], 0.35 * v[1], 0.42 * v[2]]);
    let gt = rasterize_silhouette(&mesh, &[0.0, 0.0, 4.0], &cam, 1.5, 256, seed, 0)?;
    let gt_t = Tensor::from_vec(&[64, 64], gt.data().to_vec())?;
    let centroid = gt.centroid()?;
    let cloud = sample_surface(&mesh, 256, seed)?;
    let pts = cloud.points().to_vec();
    let weights = LossWeights::default();
    let focal = Tensor::scalar(cam.focal);
    let theta0 = Tensor::from_vec(&[3], vec![0.12, -0.06, 4.15])?;
    let err = grad_check(
        |theta: &Tensor| {
            let mask = splat_mask(&pts, theta, &focal, &cam, 1.5, 0)?;
            Ok(adaptive_total_loss_t(&mask, &gt_t, centroid, &weights)?.0)
        },
        &theta0,
        1e-5,
    )?;
    Ok((err < 1e-4, format!("max rel error {err:.2e}")))
}

fn check_translation_consistency(seed: u64) -> Result<(bool, String)> {
    let cam = CameraParams::centered(128, 128, 140.0);
    let mesh = unit_sphere_mesh(2).map_vertices(|v| [0.3 * v[0], 0.3 * v[1], 0.3 * v[2]]);
    let z = 6.0;
    let base = rasterize_silhouette(&mesh, &[0.0, 0.0, z], &cam, 1.5, 2048, seed, 0)?;
    let dx = 0.4;
    let moved = rasterize_silhouette(&mesh, &[dx, 0.0, z], &cam, 1.5, 2048, seed, 0)?;
    let (cx0, _) = base.centroid()?;
    let (cx1, _) = moved.centroid()?;
    let shift_px = (cx1 - cx0) * cam.width as f64;
    let expected = cam.focal * dx / z;
    let rel = ((shift_px - expected) / expected).abs();
    Ok((
        rel < 0.05,
        format!("measured {shift_px:.2} px vs pinhole {expected:.2} px ({:.1}%)", rel * 100.0),
    ))
}

fn check_descent_sanity(seed: u64) -> Result<(bool, String)> {
    let mesh = unit_sphere_mesh(1).map_vertices(|v| [0.5 * v[0], 0.35 * v[1], 0.42 * v[2]]);
    let n = 4usize;
    let meshes = MeshSequence::new(vec![mesh; n])?;
    let cam = CameraParams::centered(96, 96, 110.0);
    let opts = TrackOptions {
        steps: 120,
        samples: 512,
        seed,
        init_override: Some(vec![[0.3, -0.2, 4.4]; n]),
        ..Default::default()
    };
    let gt: Vec<MaskImage> = (0..n)
        .map(|i| {
            rasterize_silhouette(
                meshes.frame(i),
                &[0.0, 0.0, 4.0],
                &cam,
                opts.sigma,
                opts.samples,
                opts.seed.wrapping_add(i as u64),
                i,
            )
        })
        .collect::<Result<_>>()?;
    let out = optimize_trajectory(&meshes, &gt, &cam, &opts)?;
    // EMA of the loss must never rise by more than 10% over any 50-step span.
    let mut ema = out.loss_trace[0];
    let mut emas = vec![ema];
    for &l in &out.loss_trace[1..] {
        ema = 0.9 * ema + 0.1 * l;
        emas.push(ema);
    }
    let mut worst = 0.0f64;
    for i in 0..emas.len().saturating_sub(50) {
        let ratio = emas[i + 50] / emas[i];
        worst = worst.max(ratio);
    }
    Ok((worst <= 1.1, format!("max 50-step EMA ratio {worst:.3}")))
}

fn check_chamfer_properties(seed: u64) -> Result<(bool, String)> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut cloud = |n: usize| -> Result<PointCloud> {
        PointCloud::new(
            (0..n)
                .map(|_| [rng.random::<f64>(), rng.random::<f64>(), rng.random::<f64>()])
                .collect(),
        )
    };
    let p = cloud(80)?;
    let g = cloud(100)?;
    let sym = (chamfer(&p, &g)? - chamfer(&g, &p)?).abs();
    if sym >= 1e-12 {
        return Ok((false, format!("asymmetry {sym:.2e}")));
    }
    if chamfer(&p, &p)? != 0.0 {
        return Ok((false, "self-chamfer not zero".into()));
    }
    // Brute-force oracle on small instances.
    let mut worst = 0.0f64;
    for _ in 0..5 {
        let a = cloud(40)?;
        let b = cloud(55)?;
        let fast = chamfer(&a, &b)?;
        let mut s1 = 0.0;
        for x in a.points() {
            let mut best = f64::INFINITY;
            for y in b.points() {
                let d = ((x[0] - y[0]).powi(2) + (x[1] - y[1]).powi(2) + (x[2] - y[2]).powi(2))
                    .sqrt();
                best = best.min(d);
            }
            s1 += best;
        }
        let mut s2 = 0.0;
        for y in b.points() {
            let mut best = f64::INFINITY;
            for x in a.points() {
                let d = ((x[0] - y[0]).powi(2) + (x[1] - y[1]).powi(2) + (x[2] - y[2]).powi(2))
                    .sqrt();
                best = best.min(d);
            }
            s2 += best;
        }
        let oracle = 0.5 * (s1 / 40.0 + s2 / 55.0);
        worst = worst.max((fast - oracle).abs());
    }
    Ok((worst < 1e-12, format!("max |impl - oracle| = {worst:.2e}")))
}

fn check_fscore_bounds(seed: u64) -> Result<(bool, String)> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..10 {
        let p = PointCloud::new(
            (0..30)
                .map(|_| [rng.random::<f64>(), rng.random::<f64>(), rng.random::<f64>()])
                .collect(),
        )?;
        let g = PointCloud::new(
            (0..25)
                .map(|_| [rng.random::<f64>(), rng.random::<f64>(), rng.random::<f64>()])
                .collect(),
        )?;
        let (precision, recall, f) = f_score(&p, &g, 0.02)?;
        let in_bounds = (0.0..=1.0).contains(&precision)
            && (0.0..=1.0).contains(&recall)
            && (0.0..=1.0).contains(&f);
        if !in_bounds {
            return Ok((false, format!("out of bounds: {precision} {recall} {f}")));
        }
        if precision + recall == 0.0 && f != 0.0 {
            return Ok((false, "nonzero f at zero precision+recall".into()));
        }
    }
    Ok((true, "precision/recall/f in [0,1]".into()))
}

fn check_dtw_identities(seed: u64) -> Result<(bool, String)> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let rows: Vec<Vec<f64>> = (0..6)
        .map(|_| (0..5).map(|_| rng.random::<f64>()).collect())
        .collect();
    let track = FeatureTrack::new(rows.clone(), "check")?;
    let (cos_self, dtw_self) = temporal_feature_compare(&track, &track)?;
    if dtw_self != 0.0 || (cos_self - 1.0).abs() > 1e-12 {
        return Ok((false, format!("self identities: cos {cos_self}, dtw {dtw_self}")));
    }
    // Exhaustive path enumeration oracle on random cost matrices.
    fn enumerate(cost: &[Vec<f64>], i: usize, j: usize) -> f64 {
        if i == 0 && j == 0 {
            return cost[0][0];
        }
        let mut best = f64::INFINITY;
        if i > 0 {
            best = best.min(enumerate(cost, i - 1, j));
        }
        if j > 0 {
            best = best.min(enumerate(cost, i, j - 1));
        }
        if i > 0 && j > 0 {
            best = best.min(enumerate(cost, i - 1, j - 1));
        }
        cost[i][j] + best
    }
    let mut worst = 0.0f64;
    for _ in 0..5 {
        let r = rng.random_range(2..=8);
        let c = rng.random_range(2..=8);
        let cost: Vec<Vec<f64>> = (0..r)
            .map(|_| (0..c).map(|_| rng.random::<f64>() * 3.0).collect())
            .collect();
        let expect = enumerate(&cost, r - 1, c - 1);
        worst = worst.max((dtw_from_cost(&cost) - expect).abs());
    }
    Ok((worst < 1e-12, format!("max |dtw - enumeration| = {worst:.2e}")))
}

fn check_identity_sequences(seed: u64) -> Result<(bool, String)> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let seq: Vec<PointCloud> = (0..4)
        .map(|_| {
            PointCloud::new(
                (0..50)
                    .map(|_| [rng.random::<f64>(), rng.random::<f64>(), rng.random::<f64>()])
                    .collect(),
            )
        })
        .collect::<Result<_>>()?;
    let dcd = delta_cd(&seq, &seq)?;
    let okl = occupancy_kl(&seq, &seq, 32, 1e-8)?;
    Ok((
        dcd == 0.0 && okl == 0.0,
        format!("delta_cd {dcd:.2e}, occupancy_kl {okl:.2e}"),
    ))
}

fn check_sampling_stability(seed: u64) -> Result<(bool, String)> {
    let mesh = unit_sphere_mesh(2);
    let gt = unit_sphere_mesh(2).map_vertices(|v| [v[0] * 1.05, v[1], v[2]]);
    let a = sample_surface(&mesh, 4096, seed)?;
    let g = sample_surface(&gt, 4096, seed + 1000)?;
    let cd_a = chamfer(&a, &g)?;
    let b = sample_surface(&mesh, 4096, seed + 1)?;
    let cd_b = chamfer(&b, &g)?;
    let rel = ((cd_a - cd_b) / cd_a).abs();
    Ok((
        rel < 0.05,
        format!("seed-to-seed CD variation {:.2}%", rel * 100.0),
    ))
}

fn check_normalization(seed: u64) -> Result<(bool, String)> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let template = unit_sphere_mesh(1);
    let frames: Vec<_> = (0..5)
        .map(|_| {
            let c = [
                rng.random::<f64>() * 10.0 - 5.0,
                rng.random::<f64>() * 10.0 - 5.0,
                rng.random::<f64>() * 10.0 - 5.0,
            ];
            let s = [
                0.5 + rng.random::<f64>(),
                0.5 + rng.random::<f64>(),
                0.5 + rng.random::<f64>(),
            ];
            template.map_vertices(|v| [c[0] + s[0] * v[0], c[1] + s[1] * v[1], c[2] + s[2] * v[2]])
        })
        .collect();
    let seq = MeshSequence::new(frames)?;
    let (norm, record) =
        crate::meshio::normalize_sequence(&seq, 0, Centering::BoundingBox)?;

    let mut max_abs = 0.0f64;
    let mut max_center = 0.0f64;
    for frame in norm.frames() {
        let (lo, hi) = frame.bounding_box()?;
        for a in 0..3 {
            max_abs = max_abs.max(lo[a].abs()).max(hi[a].abs());
            max_center = max_center.max((lo[a] + hi[a]).abs() * 0.5);
        }
    }
    let back = crate::meshio::denormalize_sequence(&norm, &record)?;
    let mut max_rt = 0.0f64;
    for (a, b) in back.frames().iter().zip(seq.frames()) {
        for (va, vb) in a.vertices().iter().zip(b.vertices()) {
            for c in 0..3 {
                max_rt = max_rt.max((va[c] - vb[c]).abs());
            }
        }
    }
    let ok = (max_abs - 1.0).abs() < 1e-9 && max_center < 1e-9 && max_rt < 1e-9;
    Ok((
        ok,
        format!("fit {max_abs:.12}, centering {max_center:.2e}, round-trip {max_rt:.2e}"),
    ))
}

/// Statistical temporal-coherence check (trains a model; slow).
pub fn check_temporal_coherence(seed: u64) -> CheckOutcome {
    run("flowmatch.temporal_coherence", || {
        let report = crate::pipeline::temporal_coherence_experiment(seed, 5)?;
        Ok((
            report.median_w2 < report.median_w0,
            format!(
                "median delta-CD: w=2 {:.5} vs w=0 {:.5}",
                report.median_w2, report.median_w0
            ),
        ))
    })
}

/// All fast property checks, in module order.
pub fn run_all(seed: u64) -> Vec<CheckOutcome> {
    vec![
        run("tensor.gradcheck_ops", || check_gradcheck_ops(seed)),
        run("tensor.matmul_oracle", || check_matmul_oracle(seed)),
        run("tensor.softmax_properties", || check_softmax_properties(seed)),
        run("tensor.gradient_accumulation", || {
            check_gradient_accumulation(seed)
        }),
        run("swattn.lossless_w0", || check_lossless_w0(seed)),
        run("swattn.rope_norm_preservation", || check_rope_norms(seed)),
        run("swattn.relative_time_identity", || {
            check_relative_time_identity(seed)
        }),
        run("swattn.attention_row_sums", || check_attention_row_sums(seed)),
        run("swattn.shift_equivariance", || check_shift_equivariance(seed)),
        run("swattn.streaming_batch_equivalence", || {
            check_streaming_equivalence(seed)
        }),
        run("swattn.cache_bound", || check_cache_bound(seed)),
        run("swattn.linear_cost", || check_linear_cost(seed)),
        run("flowmatch.loss_identities", || check_fm_loss_identities(seed)),
        run("flowmatch.euler_linear_path", || check_euler_linear_path(seed)),
        run("flowmatch.euler_determinism", || check_euler_determinism(seed)),
        run("flowmatch.fm_loss_gradient", || check_fm_loss_gradient(seed)),
        run("flowmatch.weight_inheritance_w0", || {
            check_weight_inheritance(seed)
        }),
        run("trajectory.loss_properties", || check_trajectory_losses(seed)),
        run("trajectory.adaptive_gradient", || check_adaptive_gradient(seed)),
        run("trajectory.translation_consistency", || {
            check_translation_consistency(seed)
        }),
        run("trajectory.descent_sanity", || check_descent_sanity(seed)),
        run("metrics.chamfer_properties", || check_chamfer_properties(seed)),
        run("metrics.fscore_bounds", || check_fscore_bounds(seed)),
        run("metrics.dtw_identities", || check_dtw_identities(seed)),
        run("metrics.identity_sequences", || check_identity_sequences(seed)),
        run("metrics.sampling_stability", || check_sampling_stability(seed)),
        run("meshio.normalization_contract", || check_normalization(seed)),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::swattn::windowed_attention;

    #[test]
    fn reference_attention_is_lossless() {
        let dev = lossless_w0_deviation(&reference_windowed_attention, 3, 20).unwrap();
        assert!(dev < 1e-10, "deviation {dev}");
    }

    /// A deliberately broken variant (rotation applied to values) must be
    /// caught by the lossless property.
    #[test]
    fn rope_on_values_fault_detected() {
        let faulty = |frames: &FrameTokens, w: usize, cfg: &RotaryConfig| -> crate::error::Result<Tensor> {
            let t_len = frames.frames();
            let n = frames.tokens_per_frame();
            let d = frames.width();
            let mut rotated = Vec::with_capacity(t_len);
            for t in 0..t_len {
                let v = frames.v.narrow0(t, 1)?.reshape(&[n, d])?;
                rotated.push(apply_rope(&v, t as i64, cfg)?.reshape(&[1, n, d])?);
            }
            let refs: Vec<&Tensor> = rotated.iter().collect();
            let broken = FrameTokens::new(
                frames.q.clone(),
                frames.k.clone(),
                Tensor::concat(&refs, 0)?,
            )?;
            windowed_attention(&broken, w, cfg)
        };
        let dev = lossless_w0_deviation(&faulty, 3, 20).unwrap();
        assert!(dev > 1e-6, "fault not detected: deviation {dev}");
    }

    #[test]
    fn fast_suite_passes() {
        for outcome in run_all(11) {
            assert!(outcome.passed, "{}: {}", outcome.name, outcome.detail);
        }
    }
}

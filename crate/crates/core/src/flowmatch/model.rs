//! Toy diffusion-transformer velocity field over per-frame latent tokens.
//!
//! Each block runs (windowed) self-attention on the latent tokens,
//! (windowed) cross-attention into per-frame conditioning tokens, and a
//! feed-forward sublayer, all with pre-layer-norm residuals. The sliding
//! window adds no parameters, so any trained model can be evaluated at a
//! different window width, including `w = 0` single-frame behavior.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::swattn::{
    cross_windowed_attention, windowed_attention_detailed, FrameTokens, RotaryConfig,
    StreamingAttention, WindowSpec,
};
use crate::tensor::{Tape, Tensor};

const LN_EPS: f64 = 1e-5;

/// Which frames of a clip the flow-matching loss supervises.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum Supervision {
    #[default]
    CenterFrame,
    AllFrames,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ToyDiTConfig {
    pub blocks: usize,
    /// Token width `d`; must be even for the rotary pairs.
    pub width: usize,
    /// Latent tokens per frame.
    pub latent_tokens: usize,
    /// Conditioning tokens per frame (same width as the latents).
    pub cond_tokens: usize,
    pub window: WindowSpec,
    pub rope_base: f64,
    pub time_embed_width: usize,
    pub ffn_mult: usize,
    /// Fixed multiplier on the output head, sized to the latent scale so
    /// learned weights stay O(1).
    #[serde(default = "default_output_scale")]
    pub output_scale: f64,
    pub supervision: Supervision,
}

fn default_output_scale() -> f64 {
    4.0
}

impl Default for ToyDiTConfig {
    fn default() -> Self {
        Self {
            blocks: 4,
            width: 32,
            latent_tokens: 16,
            cond_tokens: 8,
            window: WindowSpec::default(),
            rope_base: RotaryConfig::DEFAULT_BASE,
            time_embed_width: 32,
            ffn_mult: 4,
            output_scale: default_output_scale(),
            supervision: Supervision::CenterFrame,
        }
    }
}

impl ToyDiTConfig {
    pub fn validate(&self) -> Result<()> {
        if self.width % 2 != 0 || self.width == 0 {
            return Err(Error::InvalidShape(format!(
                "token width must be even and positive, got {}",
                self.width
            )));
        }
        if self.time_embed_width % 2 != 0 || self.time_embed_width == 0 {
            return Err(Error::InvalidShape(
                "time embedding width must be even and positive".into(),
            ));
        }
        if self.blocks == 0 || self.latent_tokens == 0 || self.cond_tokens == 0 {
            return Err(Error::InvalidShape("block/token counts must be >= 1".into()));
        }
        self.window.validate()
    }

    pub fn rotary(&self) -> Result<RotaryConfig> {
        RotaryConfig::with_base(self.width, self.rope_base)
    }
}

/// Window widths to use at evaluation time instead of the trained config.
#[derive(Debug, Clone, Copy)]
pub struct WindowOverride {
    pub w_self: usize,
    pub w_cross: usize,
}

/// Anything that predicts a latent velocity for a clip at flow time `s`.
pub trait VelocityField {
    fn velocity(
        &self,
        x: &Tensor,
        cond: &Tensor,
        s: f64,
        frame_offset: i64,
        windows: Option<WindowOverride>,
    ) -> Result<Tensor>;
}

/// How attention materializes its windows.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ForwardMode {
    Batch,
    /// Per-layer rolling KV cache; outputs match Batch frame for frame.
    Streaming,
}

/// Counters reported by a streaming forward pass.
#[derive(Debug, Clone, Copy, Default)]
pub struct ForwardStats {
    pub peak_cache_frames: usize,
    pub peak_cache_keys: usize,
}

#[derive(Debug, Clone)]
pub struct ToyDiT {
    cfg: ToyDiTConfig,
    params: Vec<(String, Tensor)>,
}

fn init_weight(name: &str, shape: &[usize], seed: u64, head: bool) -> Result<Tensor> {
    if head || name.ends_with(".b1") || name.ends_with(".b2") || name.ends_with(".bias") {
        Tensor::zeros(shape)
    } else if name == "pos.embed" {
        Tensor::gaussian(shape, seed, 0.0, 1.0)
    } else if name.contains("cross.wv") || name.contains("cross.wo") {
        // Strong conditioning value path at init: the residual stream must
        // carry condition features at a magnitude the head can pick up
        // before the noisy-latent shortcut dominates.
        Tensor::gaussian(shape, seed, 0.0, 0.5)
    } else {
        let fan_in = shape[0] as f64;
        Tensor::gaussian(shape, seed, 0.0, (1.0 / fan_in).sqrt())
    }
}

impl ToyDiT {
    pub fn new(cfg: ToyDiTConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let d = cfg.width;
        let f = cfg.ffn_mult * d;
        let te = cfg.time_embed_width;
        let mut params: Vec<(String, Tensor)> = Vec::new();
        let mut counter = 0u64;
        let mut push = |name: String, shape: &[usize], head: bool| -> Result<()> {
            let t = init_weight(&name, shape, seed.wrapping_add(counter), head)?;
            counter += 1;
            params.push((name, t));
            Ok(())
        };
        push("time.w".into(), &[te, d], false)?;
        push("time.bias".into(), &[d], false)?;
        // Latent tokens need stable identities: a shared head can only
        // emit token-specific outputs if each token carries one.
        push("pos.embed".into(), &[cfg.latent_tokens, d], false)?;
        for b in 0..cfg.blocks {
            for w in ["wq", "wk", "wv", "wo"] {
                push(format!("blk{b}.attn.{w}"), &[d, d], false)?;
            }
            for w in ["wq", "wk", "wv", "wo"] {
                push(format!("blk{b}.cross.{w}"), &[d, d], false)?;
            }
            push(format!("blk{b}.ffn.w1"), &[d, f], false)?;
            push(format!("blk{b}.ffn.b1"), &[f], false)?;
            push(format!("blk{b}.ffn.w2"), &[f, d], false)?;
            push(format!("blk{b}.ffn.b2"), &[d], false)?;
        }
        // Zero-initialized head: the initial velocity field is zero.
        push("head.w".into(), &[d, d], true)?;
        push("head.bias".into(), &[d], true)?;
        Ok(Self { cfg, params })
    }

    pub fn from_parts(cfg: ToyDiTConfig, params: Vec<(String, Tensor)>) -> Result<Self> {
        cfg.validate()?;
        Ok(Self { cfg, params })
    }

    pub fn config(&self) -> &ToyDiTConfig {
        &self.cfg
    }

    pub fn params(&self) -> &[(String, Tensor)] {
        &self.params
    }

    /// Same weights, watched on `tape` so a forward pass records gradients.
    pub fn traced(&self, tape: &Tape) -> ToyDiT {
        ToyDiT {
            cfg: self.cfg.clone(),
            params: self
                .params
                .iter()
                .map(|(n, t)| (n.clone(), t.watch(tape)))
                .collect(),
        }
    }

    pub fn param_values(&self) -> Vec<Vec<f64>> {
        self.params.iter().map(|(_, t)| t.to_vec()).collect()
    }

    pub fn set_param_values(&mut self, values: &[Vec<f64>]) -> Result<()> {
        if values.len() != self.params.len() {
            return Err(Error::Contract("parameter count mismatch".into()));
        }
        for ((_, t), v) in self.params.iter_mut().zip(values) {
            *t = Tensor::from_vec(t.shape(), v.clone())?;
        }
        Ok(())
    }

    fn param(&self, name: &str) -> &Tensor {
        &self
            .params
            .iter()
            .find(|(n, _)| n == name)
            .unwrap_or_else(|| panic!("unknown parameter {name}"))
            .1
    }

    fn project(&self, h: &Tensor, name: &str) -> Result<Tensor> {
        let shape = h.shape().to_vec();
        let d_in = *shape.last().expect("rank >= 1");
        let rows: usize = shape[..shape.len() - 1].iter().product();
        let w = self.param(name);
        let out = h.reshape(&[rows, d_in])?.matmul(w)?;
        let d_out = w.shape()[1];
        let mut out_shape = shape;
        *out_shape.last_mut().expect("rank >= 1") = d_out;
        out.reshape(&out_shape)
    }

    fn time_embedding(&self, s: f64) -> Result<Tensor> {
        // Geometric frequencies from 1 to ~100 rad over s in [0, 1]; an
        // integer-periodic family would alias s = 0 with s = 1, exactly
        // where the velocity field changes fastest.
        let te = self.cfg.time_embed_width;
        let half = te / 2;
        let mut feats = Vec::with_capacity(te);
        for k in 0..half {
            let omega = 100.0f64.powf(k as f64 / (half.max(2) - 1) as f64);
            feats.push((omega * s).sin());
            feats.push((omega * s).cos());
        }
        let feat = Tensor::from_vec(&[1, te], feats)?;
        let emb = feat.matmul(self.param("time.w"))?;
        emb.add(&self.param("time.bias").reshape(&[1, self.cfg.width])?)?
            .reshape(&[self.cfg.width])
    }

    /// Full forward pass; `windows` overrides the configured half-widths.
    pub fn forward(
        &self,
        x: &Tensor,
        cond: &Tensor,
        s: f64,
        frame_offset: i64,
        windows: Option<WindowOverride>,
        mode: ForwardMode,
        stats: Option<&mut ForwardStats>,
    ) -> Result<Tensor> {
        if x.shape().len() != 3 || cond.shape().len() != 3 {
            return Err(Error::ShapeMismatch("latents and conditions must be [T, N, D]".into()));
        }
        let (t_len, l, d) = (x.shape()[0], x.shape()[1], x.shape()[2]);
        if l != self.cfg.latent_tokens || d != self.cfg.width {
            return Err(Error::ShapeMismatch(format!(
                "latents {:?} do not match config [T, {}, {}]",
                x.shape(),
                self.cfg.latent_tokens,
                self.cfg.width
            )));
        }
        if cond.shape()[0] != t_len || cond.shape()[1] != self.cfg.cond_tokens || cond.shape()[2] != d
        {
            return Err(Error::ShapeMismatch(format!(
                "conditions {:?} do not match config [{t_len}, {}, {d}]",
                cond.shape(),
                self.cfg.cond_tokens
            )));
        }
        let rope = self.cfg.rotary()?;
        let (w_self, w_cross) = match windows {
            Some(o) => (o.w_self, o.w_cross),
            None => (self.cfg.window.w_self, self.cfg.window.w_cross),
        };

        let mut local_stats = ForwardStats::default();
        let emb = self.time_embedding(s)?;
        let mut h = x.add(&emb)?.add(self.param("pos.embed"))?;

        for b in 0..self.cfg.blocks {
            // Self-attention sublayer.
            let hn = h.layer_norm(LN_EPS)?;
            let q = self.project(&hn, &format!("blk{b}.attn.wq"))?;
            let k = self.project(&hn, &format!("blk{b}.attn.wk"))?;
            let v = self.project(&hn, &format!("blk{b}.attn.wv"))?;
            let w_eff = if self.cfg.window.self_windowed(b) { w_self } else { 0 };
            let attn = match mode {
                ForwardMode::Batch => {
                    windowed_attention_detailed(
                        &FrameTokens::new(q, k, v)?,
                        w_eff,
                        &rope,
                        frame_offset,
                    )?
                    .output
                }
                // The cache indexes frames from zero; shift equivariance
                // makes the rotary offset immaterial here.
                ForwardMode::Streaming => {
                    streaming_layer(&q, &k, &v, w_eff, &rope, &mut local_stats)?
                }
            };
            h = h.add(&self.project(&attn, &format!("blk{b}.attn.wo"))?)?;

            // Cross-attention sublayer into the conditioning tokens.
            let hn = h.layer_norm(LN_EPS)?;
            let qc = self.project(&hn, &format!("blk{b}.cross.wq"))?;
            let ck = self.project(cond, &format!("blk{b}.cross.wk"))?;
            let cv = self.project(cond, &format!("blk{b}.cross.wv"))?;
            let wc_eff = if self.cfg.window.cross_windowed(b) { w_cross } else { 0 };
            let cross = cross_windowed_attention(&qc, &ck, &cv, wc_eff, &rope, frame_offset)?;
            h = h.add(&self.project(&cross.output, &format!("blk{b}.cross.wo"))?)?;

            // Feed-forward sublayer.
            let hn = h.layer_norm(LN_EPS)?;
            let f1 = self
                .project(&hn, &format!("blk{b}.ffn.w1"))?
                .add(self.param(&format!("blk{b}.ffn.b1")))?
                .silu();
            let f2 = self
                .project(&f1, &format!("blk{b}.ffn.w2"))?
                .add(self.param(&format!("blk{b}.ffn.b2")))?;
            h = h.add(&f2)?;
        }

        // The head reads the raw residual stream: both the conditioning
        // estimate and the -x_s identity component survive unnormalized.
        let out = self
            .project(&h, "head.w")?
            .scale(self.cfg.output_scale)
            .add(self.param("head.bias"))?;
        if let Some(stats) = stats {
            stats.peak_cache_frames = stats.peak_cache_frames.max(local_stats.peak_cache_frames);
            stats.peak_cache_keys = stats.peak_cache_keys.max(local_stats.peak_cache_keys);
        }
        Ok(out)
    }

    /// Single-frame forward without any windowing machinery: plain
    /// per-frame attention, no rotary rotation anywhere.
    pub fn plain_per_frame_forward(&self, x: &Tensor, cond: &Tensor, s: f64) -> Result<Tensor> {
        use crate::swattn::vanilla_attention;
        let (t_len, l, d) = (x.shape()[0], x.shape()[1], x.shape()[2]);
        let m = self.cfg.cond_tokens;
        let emb = self.time_embedding(s)?;
        let mut frames = Vec::with_capacity(t_len);
        for t in 0..t_len {
            let xt = x.narrow0(t, 1)?.reshape(&[l, d])?;
            let ct = cond.narrow0(t, 1)?.reshape(&[m, d])?;
            let mut h = xt.add(&emb)?.add(self.param("pos.embed"))?;
            for b in 0..self.cfg.blocks {
                let hn = h.layer_norm(LN_EPS)?;
                let q = hn.matmul(self.param(&format!("blk{b}.attn.wq")))?;
                let k = hn.matmul(self.param(&format!("blk{b}.attn.wk")))?;
                let v = hn.matmul(self.param(&format!("blk{b}.attn.wv")))?;
                let attn = vanilla_attention(&q, &k, &v)?;
                h = h.add(&attn.matmul(self.param(&format!("blk{b}.attn.wo")))?)?;

                let hn = h.layer_norm(LN_EPS)?;
                let qc = hn.matmul(self.param(&format!("blk{b}.cross.wq")))?;
                let ck = ct.matmul(self.param(&format!("blk{b}.cross.wk")))?;
                let cv = ct.matmul(self.param(&format!("blk{b}.cross.wv")))?;
                let cross = vanilla_attention(&qc, &ck, &cv)?;
                h = h.add(&cross.matmul(self.param(&format!("blk{b}.cross.wo")))?)?;

                let hn = h.layer_norm(LN_EPS)?;
                let f1 = hn
                    .matmul(self.param(&format!("blk{b}.ffn.w1")))?
                    .add(self.param(&format!("blk{b}.ffn.b1")))?
                    .silu();
                let f2 = f1
                    .matmul(self.param(&format!("blk{b}.ffn.w2")))?
                    .add(self.param(&format!("blk{b}.ffn.b2")))?;
                h = h.add(&f2)?;
            }
            let out = h
                .matmul(self.param("head.w"))?
                .scale(self.cfg.output_scale)
                .add(self.param("head.bias"))?;
            frames.push(out.reshape(&[1, l, d])?);
        }
        let refs: Vec<&Tensor> = frames.iter().collect();
        Tensor::concat(&refs, 0)
    }
}

fn streaming_layer(
    q: &Tensor,
    k: &Tensor,
    v: &Tensor,
    w: usize,
    rope: &RotaryConfig,
    stats: &mut ForwardStats,
) -> Result<Tensor> {
    let (t_len, n, d) = (q.shape()[0], q.shape()[1], q.shape()[2]);
    let mut stream = StreamingAttention::new(w, rope.clone());
    let mut outs: Vec<Option<Tensor>> = vec![None; t_len];
    for t in 0..t_len {
        let qt = q.narrow0(t, 1)?.reshape(&[n, d])?.detach();
        let kt = k.narrow0(t, 1)?.reshape(&[n, d])?.detach();
        let vt = v.narrow0(t, 1)?.reshape(&[n, d])?.detach();
        if let Some((u, o)) = stream.push(t, &qt, &kt, &vt)? {
            outs[u] = Some(o);
        }
    }
    for (u, o) in stream.finish()? {
        outs[u] = Some(o);
    }
    stats.peak_cache_frames = stats.peak_cache_frames.max(stream.cache().peak_frames());
    stats.peak_cache_keys = stats.peak_cache_keys.max(stream.cache().peak_keys());
    let frames: Vec<Tensor> = outs
        .into_iter()
        .map(|o| o.expect("stream emitted every frame").reshape(&[1, n, d]))
        .collect::<Result<_>>()?;
    let refs: Vec<&Tensor> = frames.iter().collect();
    Tensor::concat(&refs, 0)
}

impl VelocityField for ToyDiT {
    fn velocity(
        &self,
        x: &Tensor,
        cond: &Tensor,
        s: f64,
        frame_offset: i64,
        windows: Option<WindowOverride>,
    ) -> Result<Tensor> {
        self.forward(x, cond, s, frame_offset, windows, ForwardMode::Batch, None)
    }
}

/// Velocity field view that evaluates every windowed layer through the
/// rolling KV cache and accumulates its peak occupancy.
pub struct StreamingField<'a> {
    model: &'a ToyDiT,
    stats: std::cell::RefCell<ForwardStats>,
}

impl<'a> StreamingField<'a> {
    pub fn new(model: &'a ToyDiT) -> Self {
        Self {
            model,
            stats: std::cell::RefCell::new(ForwardStats::default()),
        }
    }

    pub fn stats(&self) -> ForwardStats {
        *self.stats.borrow()
    }
}

impl VelocityField for StreamingField<'_> {
    fn velocity(
        &self,
        x: &Tensor,
        cond: &Tensor,
        s: f64,
        frame_offset: i64,
        windows: Option<WindowOverride>,
    ) -> Result<Tensor> {
        let mut stats = self.stats.borrow_mut();
        self.model.forward(
            x,
            cond,
            s,
            frame_offset,
            windows,
            ForwardMode::Streaming,
            Some(&mut stats),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_cfg() -> ToyDiTConfig {
        ToyDiTConfig {
            blocks: 2,
            width: 8,
            latent_tokens: 3,
            cond_tokens: 2,
            time_embed_width: 8,
            ffn_mult: 2,
            ..Default::default()
        }
    }

    fn inputs(cfg: &ToyDiTConfig, t_len: usize, seed: u64) -> (Tensor, Tensor) {
        (
            Tensor::gaussian(&[t_len, cfg.latent_tokens, cfg.width], seed, 0.0, 1.0).unwrap(),
            Tensor::gaussian(&[t_len, cfg.cond_tokens, cfg.width], seed + 1, 0.0, 1.0).unwrap(),
        )
    }

    #[test]
    fn zero_head_gives_zero_velocity_at_init() {
        let cfg = small_cfg();
        let model = ToyDiT::new(cfg.clone(), 1).unwrap();
        let (x, cond) = inputs(&cfg, 3, 10);
        let v = model.velocity(&x, &cond, 0.3, 0, None).unwrap();
        assert!(v.max_abs() == 0.0);
    }

    #[test]
    fn forward_deterministic() {
        let cfg = small_cfg();
        let model = ToyDiT::new(cfg.clone(), 2).unwrap();
        let (x, cond) = inputs(&cfg, 4, 20);
        let a = model.velocity(&x, &cond, 0.7, 0, None).unwrap();
        let b = model.velocity(&x, &cond, 0.7, 0, None).unwrap();
        assert_eq!(a.to_vec(), b.to_vec());
    }

    #[test]
    fn windowed_w0_matches_plain_per_frame() {
        let cfg = small_cfg();
        let mut model = ToyDiT::new(cfg.clone(), 3).unwrap();
        // Give the head real weights so outputs are nonzero.
        let mut values = model.param_values();
        let n = values.len();
        values[n - 2] = Tensor::gaussian(&[cfg.width, cfg.width], 99, 0.0, 0.3)
            .unwrap()
            .to_vec();
        model.set_param_values(&values).unwrap();

        let (x, cond) = inputs(&cfg, 4, 30);
        let windowed = model
            .velocity(&x, &cond, 0.4, 0, Some(WindowOverride { w_self: 0, w_cross: 0 }))
            .unwrap();
        let plain = model.plain_per_frame_forward(&x, &cond, 0.4).unwrap();
        let mut max_diff = 0.0f64;
        for (a, b) in windowed.data().iter().zip(plain.data()) {
            max_diff = max_diff.max((a - b).abs());
        }
        assert!(max_diff < 1e-10, "W=0 drift {max_diff}");
    }

    #[test]
    fn streaming_forward_matches_batch() {
        let cfg = small_cfg();
        let mut model = ToyDiT::new(cfg.clone(), 4).unwrap();
        let mut values = model.param_values();
        let n = values.len();
        values[n - 2] = Tensor::gaussian(&[cfg.width, cfg.width], 98, 0.0, 0.3)
            .unwrap()
            .to_vec();
        model.set_param_values(&values).unwrap();

        let (x, cond) = inputs(&cfg, 7, 40);
        let batch = model
            .forward(&x, &cond, 0.2, 0, None, ForwardMode::Batch, None)
            .unwrap();
        let mut stats = ForwardStats::default();
        let streamed = model
            .forward(&x, &cond, 0.2, 0, None, ForwardMode::Streaming, Some(&mut stats))
            .unwrap();
        let mut max_diff = 0.0f64;
        for (a, b) in batch.data().iter().zip(streamed.data()) {
            max_diff = max_diff.max((a - b).abs());
        }
        assert!(max_diff < 1e-10, "streaming drift {max_diff}");
        assert!(stats.peak_cache_frames <= 2 * cfg.window.w_self + 1);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let cfg = small_cfg();
        let model = ToyDiT::new(cfg.clone(), 5).unwrap();
        let x = Tensor::<f64>::gaussian(&[2, cfg.latent_tokens + 1, cfg.width], 1, 0.0, 1.0)
            .unwrap();
        let cond =
            Tensor::<f64>::gaussian(&[2, cfg.cond_tokens, cfg.width], 2, 0.0, 1.0).unwrap();
        assert!(model.velocity(&x, &cond, 0.1, 0, None).is_err());
    }
}

//! Rolling KV cache and streaming evaluation of windowed attention.
//!
//! Frames are pushed strictly in order. The cache retains the last
//! `2w+1` frames of rotated keys and raw values, so memory stays O(w)
//! regardless of sequence length, and emitted outputs match the batch
//! path frame for frame.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

use super::rope::{apply_rope, RotaryConfig};

struct CachedFrame<T: Scalar> {
    frame: usize,
    /// Keys already rotated by their own frame's phases.
    k_rot: Tensor<T>,
    v: Tensor<T>,
}

/// Ring buffer over the last `2w+1` frames of rotated keys and values.
pub struct KvCache<T: Scalar = f64> {
    w: usize,
    frames: VecDeque<CachedFrame<T>>,
    peak_frames: usize,
    peak_keys: usize,
}

impl<T: Scalar> KvCache<T> {
    pub fn new(w: usize) -> Self {
        Self {
            w,
            frames: VecDeque::new(),
            peak_frames: 0,
            peak_keys: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        2 * self.w + 1
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Highest number of frames ever held.
    pub fn peak_frames(&self) -> usize {
        self.peak_frames
    }

    /// Highest number of key vectors ever held.
    pub fn peak_keys(&self) -> usize {
        self.peak_keys
    }

    fn push(&mut self, frame: usize, k_rot: Tensor<T>, v: Tensor<T>) {
        self.frames.push_back(CachedFrame { frame, k_rot, v });
        while self.frames.len() > self.capacity() {
            self.frames.pop_front();
        }
        self.peak_frames = self.peak_frames.max(self.frames.len());
        let keys: usize = self.frames.iter().map(|f| f.k_rot.shape()[0]).sum();
        self.peak_keys = self.peak_keys.max(keys);
    }

    fn window(&self, lo: usize, hi: usize) -> (Vec<&Tensor<T>>, Vec<&Tensor<T>>) {
        let mut ks = Vec::new();
        let mut vs = Vec::new();
        for f in &self.frames {
            if f.frame >= lo && f.frame <= hi {
                ks.push(&f.k_rot);
                vs.push(&f.v);
            }
        }
        (ks, vs)
    }
}

/// Streaming evaluator: push one frame of Q/K/V at a time, receive
/// outputs as soon as their full (clamped) window is available.
pub struct StreamingAttention<T: Scalar = f64> {
    cache: KvCache<T>,
    pending: VecDeque<(usize, Tensor<T>)>,
    cfg: RotaryConfig,
    w: usize,
    next_frame: usize,
    emitted: usize,
}

impl<T: Scalar> StreamingAttention<T> {
    pub fn new(w: usize, cfg: RotaryConfig) -> Self {
        Self {
            cache: KvCache::new(w),
            pending: VecDeque::new(),
            cfg,
            w,
            next_frame: 0,
            emitted: 0,
        }
    }

    pub fn cache(&self) -> &KvCache<T> {
        &self.cache
    }

    /// Push tokens for frame `t` (`[N, D]` each). Frames must arrive in
    /// strictly increasing order starting at zero. Returns the output for
    /// the frame whose window just completed, if any.
    pub fn push(
        &mut self,
        t: usize,
        q: &Tensor<T>,
        k: &Tensor<T>,
        v: &Tensor<T>,
    ) -> Result<Option<(usize, Tensor<T>)>> {
        if t != self.next_frame {
            return Err(Error::Contract(format!(
                "non-monotone frame push: expected {}, got {t}",
                self.next_frame
            )));
        }
        self.next_frame += 1;

        let q_rot = apply_rope(q, t as i64, &self.cfg)?;
        let k_rot = apply_rope(k, t as i64, &self.cfg)?;
        self.cache.push(t, k_rot, v.detach());
        self.pending.push_back((t, q_rot));

        if t >= self.w && self.emitted == t - self.w {
            let out = self.emit(t - self.w, t)?;
            return Ok(Some(out));
        }
        Ok(None)
    }

    /// Flush outputs for the trailing frames whose windows are clamped at
    /// the end of the sequence.
    pub fn finish(&mut self) -> Result<Vec<(usize, Tensor<T>)>> {
        let last = match self.next_frame.checked_sub(1) {
            Some(l) => l,
            None => return Ok(Vec::new()),
        };
        let mut outs = Vec::new();
        while self.emitted <= last {
            outs.push(self.emit(self.emitted, last)?);
        }
        Ok(outs)
    }

    fn emit(&mut self, u: usize, newest: usize) -> Result<(usize, Tensor<T>)> {
        let (_, q_rot) = self
            .pending
            .pop_front()
            .ok_or_else(|| Error::Contract("no pending query to emit".into()))?;
        let lo = u.saturating_sub(self.w);
        let hi = (u + self.w).min(newest);
        let (ks, vs) = self.cache.window(lo, hi);
        let k_win = Tensor::concat(&ks, 0)?;
        let v_win = Tensor::concat(&vs, 0)?;
        let d = q_rot.shape()[1];
        let scale = T::from_f64(1.0 / (d as f64).sqrt());
        let weights = q_rot
            .matmul(&k_win.transpose2()?)?
            .scale(scale)
            .softmax_lastdim()?;
        let out = weights.matmul(&v_win)?;
        self.emitted = u + 1;
        Ok((u, out))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::swattn::window::{windowed_attention, FrameTokens};

    fn run_streaming(
        frames: &FrameTokens,
        w: usize,
        cfg: &RotaryConfig,
    ) -> (Vec<Tensor>, usize, usize) {
        let t_len = frames.frames();
        let n = frames.tokens_per_frame();
        let d = frames.width();
        let mut stream = StreamingAttention::new(w, cfg.clone());
        let mut outs: Vec<Option<Tensor>> = vec![None; t_len];
        for t in 0..t_len {
            let q = frames.q.narrow0(t, 1).unwrap().reshape(&[n, d]).unwrap();
            let k = frames.k.narrow0(t, 1).unwrap().reshape(&[n, d]).unwrap();
            let v = frames.v.narrow0(t, 1).unwrap().reshape(&[n, d]).unwrap();
            if let Some((u, o)) = stream.push(t, &q, &k, &v).unwrap() {
                outs[u] = Some(o);
            }
        }
        for (u, o) in stream.finish().unwrap() {
            outs[u] = Some(o);
        }
        let peak_frames = stream.cache().peak_frames();
        let peak_keys = stream.cache().peak_keys();
        (
            outs.into_iter().map(|o| o.expect("all frames emitted")).collect(),
            peak_frames,
            peak_keys,
        )
    }

    #[test]
    fn streaming_matches_batch() {
        let (t_len, n, d, w) = (10usize, 3usize, 8usize, 2usize);
        let cfg = RotaryConfig::new(d).unwrap();
        let frames = FrameTokens::new(
            Tensor::<f64>::gaussian(&[t_len, n, d], 200, 0.0, 1.0).unwrap(),
            Tensor::<f64>::gaussian(&[t_len, n, d], 201, 0.0, 1.0).unwrap(),
            Tensor::<f64>::gaussian(&[t_len, n, d], 202, 0.0, 1.0).unwrap(),
        )
        .unwrap();
        let batch = windowed_attention(&frames, w, &cfg).unwrap();
        let (streamed, peak_frames, _) = run_streaming(&frames, w, &cfg);
        for t in 0..t_len {
            for i in 0..n {
                for c in 0..d {
                    let diff = (batch.at(&[t, i, c]) - streamed[t].at(&[i, c])).abs();
                    assert!(diff < 1e-10, "frame {t} deviates by {diff}");
                }
            }
        }
        assert!(peak_frames <= 2 * w + 1);
    }

    #[test]
    fn short_sequence_fully_clamped() {
        // T smaller than the window: everything flushes at finish().
        let (t_len, n, d, w) = (2usize, 2usize, 4usize, 3usize);
        let cfg = RotaryConfig::new(d).unwrap();
        let frames = FrameTokens::new(
            Tensor::<f64>::gaussian(&[t_len, n, d], 210, 0.0, 1.0).unwrap(),
            Tensor::<f64>::gaussian(&[t_len, n, d], 211, 0.0, 1.0).unwrap(),
            Tensor::<f64>::gaussian(&[t_len, n, d], 212, 0.0, 1.0).unwrap(),
        )
        .unwrap();
        let batch = windowed_attention(&frames, w, &cfg).unwrap();
        let (streamed, _, _) = run_streaming(&frames, w, &cfg);
        for t in 0..t_len {
            for i in 0..n {
                for c in 0..d {
                    assert!((batch.at(&[t, i, c]) - streamed[t].at(&[i, c])).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn cache_occupancy_bounded() {
        let (n, d, w) = (2usize, 4usize, 2usize);
        let cfg = RotaryConfig::new(d).unwrap();
        let mut stream = StreamingAttention::new(w, cfg);
        for t in 0..100usize {
            let q = Tensor::<f64>::gaussian(&[n, d], t as u64 * 3, 0.0, 1.0).unwrap();
            let k = Tensor::<f64>::gaussian(&[n, d], t as u64 * 3 + 1, 0.0, 1.0).unwrap();
            let v = Tensor::<f64>::gaussian(&[n, d], t as u64 * 3 + 2, 0.0, 1.0).unwrap();
            stream.push(t, &q, &k, &v).unwrap();
            assert!(stream.cache().len() <= 2 * w + 1);
        }
        assert_eq!(stream.cache().peak_frames(), 2 * w + 1);
        assert_eq!(stream.cache().peak_keys(), (2 * w + 1) * n);
    }

    #[test]
    fn non_monotone_push_rejected() {
        let cfg = RotaryConfig::new(4).unwrap();
        let mut stream = StreamingAttention::<f64>::new(1, cfg);
        let q = Tensor::<f64>::gaussian(&[2, 4], 1, 0.0, 1.0).unwrap();
        stream.push(0, &q, &q, &q).unwrap();
        assert!(matches!(
            stream.push(2, &q, &q, &q),
            Err(Error::Contract(_))
        ));
    }
}

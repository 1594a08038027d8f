//! Synthetic 4D latent sequences with matching ground-truth meshes.
//!
//! A frame's state is an ellipsoid center and axis triple following smooth
//! sinusoidal motion. States are lifted into latent tokens by a fixed
//! orthonormal linear encoder; the matching decoder inverts it and
//! instantiates an icosphere template, standing in for a learned geometry
//! decoder so generated latents can be scored as meshes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::meshio::{MeshFrame, MeshSequence};
use crate::tensor::Tensor;

const ENCODER_SEED: u64 = 0x7A31_0C0D_E000_0001;
const COND_SEED: u64 = 0x7A31_0C0D_E000_0002;
const STATE_DIM: usize = 6;
/// Observation features: center (3), two rotating axis probes, probe
/// phase (cos, sin), bias.
const OBS_DIM: usize = 8;
/// Frames per revolution of the axis probes.
const PROBE_PERIOD: f64 = 8.0;
const MIN_AXIS: f64 = 0.02;

/// Sinusoidal motion of the ellipsoid center and axes. Cycle counts are
/// per full clip, so trajectories stay smooth for any frame count.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct MotionParams {
    pub center_amplitude: [f64; 3],
    pub center_cycles: [f64; 3],
    pub axis_base: [f64; 3],
    pub axis_amplitude: [f64; 3],
    pub axis_cycles: [f64; 3],
}

impl Default for MotionParams {
    fn default() -> Self {
        Self {
            center_amplitude: [0.35, 0.25, 0.2],
            center_cycles: [1.0, 2.0, 1.5],
            axis_base: [0.5, 0.4, 0.45],
            axis_amplitude: [0.18, 0.15, 0.12],
            axis_cycles: [2.0, 1.0, 3.0],
        }
    }
}

impl MotionParams {
    pub fn static_shape() -> Self {
        Self {
            center_amplitude: [0.0; 3],
            center_cycles: [0.0; 3],
            axis_base: [0.5, 0.4, 0.45],
            axis_amplitude: [0.0; 3],
            axis_cycles: [0.0; 3],
        }
    }

    /// Upper bound on the state-space step between consecutive frames,
    /// from the derivative bound |sin(x+w) - sin(x)| <= w.
    pub fn max_state_step(&self, t_len: usize) -> f64 {
        let t = t_len.max(1) as f64;
        let mut sq = 0.0;
        for k in 0..3 {
            let wc = 2.0 * std::f64::consts::PI * self.center_cycles[k] / t;
            let wa = 2.0 * std::f64::consts::PI * self.axis_cycles[k] / t;
            sq += (self.center_amplitude[k] * wc).powi(2);
            sq += (self.axis_amplitude[k] * wa).powi(2);
        }
        sq.sqrt()
    }
}

/// Ellipsoid state of one frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MotionState {
    pub center: [f64; 3],
    pub axes: [f64; 3],
}

impl MotionState {
    fn to_vec(self) -> [f64; STATE_DIM] {
        [
            self.center[0],
            self.center[1],
            self.center[2],
            self.axes[0],
            self.axes[1],
            self.axes[2],
        ]
    }

    fn from_vec(z: &[f64]) -> Self {
        Self {
            center: [z[0], z[1], z[2]],
            axes: [
                z[3].max(MIN_AXIS),
                z[4].max(MIN_AXIS),
                z[5].max(MIN_AXIS),
            ],
        }
    }
}

/// Latent/conditioning dimensions and the encoder gain.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct SynthDims {
    pub latent_tokens: usize,
    pub width: usize,
    pub cond_tokens: usize,
    pub cond_width: usize,
    /// Scales the orthonormal encoder so latent entries carry signal well
    /// above the unit sampling noise.
    pub latent_gain: f64,
}

impl Default for SynthDims {
    fn default() -> Self {
        Self {
            latent_tokens: 16,
            width: 32,
            cond_tokens: 8,
            cond_width: 32,
            latent_gain: 200.0,
        }
    }
}

/// One synthetic clip: latents, conditions, ground-truth meshes, states.
#[derive(Debug, Clone)]
pub struct SyntheticSequence {
    pub latents: Tensor,
    pub conditions: Tensor,
    pub meshes: MeshSequence,
    pub states: Vec<MotionState>,
}

/// Fixed orthonormal columns lifting the 6-dim state into latent space.
fn encoder_matrix(rows: usize) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(ENCODER_SEED);
    let mut cols: Vec<Vec<f64>> = (0..STATE_DIM)
        .map(|_| {
            (0..rows)
                .map(|_| rand_distr::Distribution::sample(&rand_distr::StandardNormal, &mut rng))
                .collect()
        })
        .collect();
    // Gram-Schmidt; rows >> 6 keeps this well-conditioned.
    for j in 0..STATE_DIM {
        for i in 0..j {
            let dot: f64 = cols[j].iter().zip(&cols[i]).map(|(a, b)| a * b).sum();
            for r in 0..rows {
                cols[j][r] -= dot * cols[i][r];
            }
        }
        let norm: f64 = cols[j].iter().map(|v| v * v).sum::<f64>().sqrt();
        for v in cols[j].iter_mut() {
            *v /= norm;
        }
    }
    cols
}

fn cond_matrix(rows: usize) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(COND_SEED);
    (0..OBS_DIM)
        .map(|_| {
            (0..rows)
                .map(|_| {
                    let g: f64 =
                        rand_distr::Distribution::sample(&rand_distr::StandardNormal, &mut rng);
                    g
                })
                .collect()
        })
        .collect()
}

/// Per-frame observation: the full center, two rotating 1D probes of the
/// axes, and the probe phase. A single frame under-determines the axes;
/// a window of neighboring frames sees complementary probe directions.
fn observe(state: &MotionState, t: usize) -> [f64; OBS_DIM] {
    let phi = 2.0 * std::f64::consts::PI * t as f64 / PROBE_PERIOD;
    let (sin, cos) = phi.sin_cos();
    let a = state.axes;
    [
        state.center[0],
        state.center[1],
        state.center[2],
        cos * a[0] + sin * a[1],
        cos * a[1] + sin * a[2],
        cos,
        sin,
        1.0,
    ]
}

fn state_at(t: usize, t_len: usize, params: &MotionParams, phases: &[f64; 6]) -> MotionState {
    let tf = t as f64 / t_len.max(1) as f64;
    let two_pi = 2.0 * std::f64::consts::PI;
    let mut center = [0.0; 3];
    let mut axes = [0.0; 3];
    for k in 0..3 {
        center[k] = params.center_amplitude[k]
            * (two_pi * params.center_cycles[k] * tf + phases[k]).sin();
        axes[k] = params.axis_base[k]
            + params.axis_amplitude[k] * (two_pi * params.axis_cycles[k] * tf + phases[3 + k]).sin();
    }
    MotionState { center, axes }
}

/// Unit icosphere template shared by the synthetic encoder and decoder.
pub fn unit_sphere_mesh(subdivisions: usize) -> MeshFrame {
    let phi = (1.0 + 5.0f64.sqrt()) / 2.0;
    let mut verts: Vec<[f64; 3]> = vec![
        [-1.0, phi, 0.0],
        [1.0, phi, 0.0],
        [-1.0, -phi, 0.0],
        [1.0, -phi, 0.0],
        [0.0, -1.0, phi],
        [0.0, 1.0, phi],
        [0.0, -1.0, -phi],
        [0.0, 1.0, -phi],
        [phi, 0.0, -1.0],
        [phi, 0.0, 1.0],
        [-phi, 0.0, -1.0],
        [-phi, 0.0, 1.0],
    ];
    let mut faces: Vec<[usize; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    let normalize = |v: [f64; 3]| {
        let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        [v[0] / n, v[1] / n, v[2] / n]
    };
    for v in verts.iter_mut() {
        *v = normalize(*v);
    }
    for _ in 0..subdivisions {
        let mut midpoint = std::collections::BTreeMap::new();
        let mut new_faces = Vec::with_capacity(faces.len() * 4);
        for f in &faces {
            let mut mids = [0usize; 3];
            for e in 0..3 {
                let (a, b) = (f[e], f[(e + 1) % 3]);
                let key = (a.min(b), a.max(b));
                mids[e] = *midpoint.entry(key).or_insert_with(|| {
                    let va = verts[a];
                    let vb = verts[b];
                    verts.push(normalize([
                        0.5 * (va[0] + vb[0]),
                        0.5 * (va[1] + vb[1]),
                        0.5 * (va[2] + vb[2]),
                    ]));
                    verts.len() - 1
                });
            }
            new_faces.push([f[0], mids[0], mids[2]]);
            new_faces.push([f[1], mids[1], mids[0]]);
            new_faces.push([f[2], mids[2], mids[1]]);
            new_faces.push([mids[0], mids[1], mids[2]]);
        }
        faces = new_faces;
    }
    MeshFrame::new(verts, faces).expect("icosphere is well-formed")
}

fn state_mesh(template: &MeshFrame, state: &MotionState) -> MeshFrame {
    template.map_vertices(|v| {
        [
            state.center[0] + state.axes[0] * v[0],
            state.center[1] + state.axes[1] * v[1],
            state.center[2] + state.axes[2] * v[2],
        ]
    })
}

fn encode_states(states: &[MotionState], dims: &SynthDims) -> Tensor {
    let rows = dims.latent_tokens * dims.width;
    let enc = encoder_matrix(rows);
    let mut data = Vec::with_capacity(states.len() * rows);
    for s in states {
        let z = s.to_vec();
        for r in 0..rows {
            let mut acc = 0.0;
            for (k, zk) in z.iter().enumerate() {
                acc += enc[k][r] * zk;
            }
            data.push(dims.latent_gain * acc);
        }
    }
    Tensor::from_vec(&[states.len(), dims.latent_tokens, dims.width], data)
        .expect("encoder output is consistent")
}

fn encode_conditions(states: &[MotionState], dims: &SynthDims) -> Tensor {
    let rows = dims.cond_tokens * dims.cond_width;
    let mat = cond_matrix(rows);
    let mut data = Vec::with_capacity(states.len() * rows);
    for (t, s) in states.iter().enumerate() {
        let obs = observe(s, t);
        for r in 0..rows {
            let mut acc = 0.0;
            for (k, ok) in obs.iter().enumerate() {
                acc += mat[k][r] * ok;
            }
            data.push(acc);
        }
    }
    Tensor::from_vec(&[states.len(), dims.cond_tokens, dims.cond_width], data)
        .expect("condition output is consistent")
}

/// Generate a deterministic synthetic clip of `t_len` frames.
pub fn synth_sequence(
    seed: u64,
    t_len: usize,
    params: &MotionParams,
    dims: &SynthDims,
) -> Result<SyntheticSequence> {
    if t_len == 0 {
        return Err(Error::InvalidInput("clip needs >= 1 frame".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut phases = [0.0f64; 6];
    for p in phases.iter_mut() {
        *p = rng.random::<f64>() * 2.0 * std::f64::consts::PI;
    }
    let states: Vec<MotionState> = (0..t_len)
        .map(|t| state_at(t, t_len, params, &phases))
        .collect();
    let template = unit_sphere_mesh(2);
    let meshes = MeshSequence::new(states.iter().map(|s| state_mesh(&template, s)).collect())?;
    Ok(SyntheticSequence {
        latents: encode_states(&states, dims),
        conditions: encode_conditions(&states, dims),
        meshes,
        states,
    })
}

/// Recover motion states from latents via the encoder transpose.
pub fn decode_states(latents: &Tensor, dims: &SynthDims) -> Result<Vec<MotionState>> {
    if latents.shape().len() != 3
        || latents.shape()[1] != dims.latent_tokens
        || latents.shape()[2] != dims.width
    {
        return Err(Error::ShapeMismatch(format!(
            "latents {:?} do not match dims [T, {}, {}]",
            latents.shape(),
            dims.latent_tokens,
            dims.width
        )));
    }
    let rows = dims.latent_tokens * dims.width;
    let enc = encoder_matrix(rows);
    let t_len = latents.shape()[0];
    let data = latents.data();
    let mut states = Vec::with_capacity(t_len);
    for t in 0..t_len {
        let x = &data[t * rows..(t + 1) * rows];
        let mut z = [0.0f64; STATE_DIM];
        for (k, zk) in z.iter_mut().enumerate() {
            let dot: f64 = enc[k].iter().zip(x).map(|(e, v)| e * v).sum();
            *zk = dot / dims.latent_gain;
        }
        states.push(MotionState::from_vec(&z));
    }
    Ok(states)
}

/// The geometry-decoder stand-in: latents to an ellipsoid mesh sequence.
pub fn decode_sequence(latents: &Tensor, dims: &SynthDims) -> Result<MeshSequence> {
    let states = decode_states(latents, dims)?;
    let template = unit_sphere_mesh(2);
    MeshSequence::new(states.iter().map(|s| state_mesh(&template, s)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_for_fixed_seed() {
        let dims = SynthDims::default();
        let a = synth_sequence(5, 12, &MotionParams::default(), &dims).unwrap();
        let b = synth_sequence(5, 12, &MotionParams::default(), &dims).unwrap();
        assert_eq!(a.latents.to_vec(), b.latents.to_vec());
        assert_eq!(a.conditions.to_vec(), b.conditions.to_vec());
    }

    #[test]
    fn zero_amplitude_is_static() {
        let dims = SynthDims::default();
        let seq = synth_sequence(9, 6, &MotionParams::static_shape(), &dims).unwrap();
        let rows = dims.latent_tokens * dims.width;
        let first = &seq.latents.data()[..rows];
        for t in 1..6 {
            let frame = &seq.latents.data()[t * rows..(t + 1) * rows];
            assert_eq!(first, frame);
        }
    }

    #[test]
    fn consecutive_latent_step_bounded() {
        let dims = SynthDims::default();
        let params = MotionParams::default();
        let t_len = 100;
        let seq = synth_sequence(3, t_len, &params, &dims).unwrap();
        let bound = dims.latent_gain * params.max_state_step(t_len) + 1e-9;
        let rows = dims.latent_tokens * dims.width;
        for t in 0..t_len - 1 {
            let a = &seq.latents.data()[t * rows..(t + 1) * rows];
            let b = &seq.latents.data()[(t + 1) * rows..(t + 2) * rows];
            let step: f64 = a
                .iter()
                .zip(b)
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt();
            assert!(step <= bound, "frame {t}: step {step} exceeds bound {bound}");
        }
    }

    #[test]
    fn encode_decode_round_trips_states() {
        let dims = SynthDims::default();
        let seq = synth_sequence(11, 8, &MotionParams::default(), &dims).unwrap();
        let decoded = decode_states(&seq.latents, &dims).unwrap();
        for (a, b) in seq.states.iter().zip(&decoded) {
            for k in 0..3 {
                assert!((a.center[k] - b.center[k]).abs() < 1e-9);
                assert!((a.axes[k] - b.axes[k]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn icosphere_has_unit_vertices() {
        let mesh = unit_sphere_mesh(2);
        assert_eq!(mesh.vertices().len(), 162);
        assert_eq!(mesh.faces().len(), 320);
        for v in mesh.vertices() {
            let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
            assert!((n - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn meshes_follow_states() {
        let dims = SynthDims::default();
        let seq = synth_sequence(2, 4, &MotionParams::default(), &dims).unwrap();
        for (t, state) in seq.states.iter().enumerate() {
            let (lo, hi) = seq.meshes.frame(t).bounding_box().unwrap();
            for k in 0..3 {
                let mid = 0.5 * (lo[k] + hi[k]);
                let half = 0.5 * (hi[k] - lo[k]);
                assert!((mid - state.center[k]).abs() < 1e-9);
                assert!((half - state.axes[k]).abs() < 1e-9);
            }
        }
    }
}

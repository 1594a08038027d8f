//! Canonical end-to-end fixtures shared by the CLI, the property suite,
//! and the acceptance tests: the default synthetic dataset, the demo
//! training run, the temporal-coherence experiment, and the closed-loop
//! trajectory recovery task.

use crate::error::Result;
use crate::flowmatch::{
    decode_sequence, euler_sample, synth_sequence, train_demo, MotionParams, SynthDims,
    SyntheticSequence, ToyDiT, ToyDiTConfig, TrainConfig, TrainResult, WindowOverride,
};
use crate::meshio::MeshSequence;
use crate::metrics::{delta_cd, sample_surface, PointCloud};
use crate::trajectory::{
    optimize_trajectory, rasterize_silhouette, CameraParams, MaskImage, TrackOptions, Trajectory,
};

/// Dimensions tying the default model config to the synthetic encoder.
pub fn default_dims(cfg: &ToyDiTConfig) -> SynthDims {
    SynthDims {
        latent_tokens: cfg.latent_tokens,
        width: cfg.width,
        cond_tokens: cfg.cond_tokens,
        cond_width: cfg.width,
        ..Default::default()
    }
}

/// The default training corpus: two 96-frame clips with distinct phases.
pub fn default_dataset(seed: u64, cfg: &ToyDiTConfig) -> Result<Vec<SyntheticSequence>> {
    let dims = default_dims(cfg);
    let params = MotionParams::default();
    Ok(vec![
        synth_sequence(seed.wrapping_add(1), 96, &params, &dims)?,
        synth_sequence(seed.wrapping_add(2), 96, &params, &dims)?,
    ])
}

/// Train the default model on the default dataset.
pub fn train_default(seed: u64, steps: usize, lr: f64) -> Result<TrainResult> {
    let cfg = ToyDiTConfig::default();
    let dataset = default_dataset(seed, &cfg)?;
    let train = TrainConfig {
        steps,
        lr,
        seed: seed.wrapping_add(10),
        ..Default::default()
    };
    train_demo(cfg, &dataset, &train, seed.wrapping_add(20))
}

fn sampled_clouds(seq: &MeshSequence, n: usize, seed: u64) -> Result<Vec<PointCloud>> {
    (0..seq.len())
        .map(|t| sample_surface(seq.frame(t), n, seed.wrapping_add(t as u64)))
        .collect()
}

pub struct CoherenceReport {
    pub median_w2: f64,
    pub median_w0: f64,
    pub per_seed: Vec<(f64, f64)>,
}

/// Generate with `w = 2` and `w = 0` from the same trained model and
/// compare temporal Chamfer deltas against a held-out ground truth.
pub fn temporal_coherence_from_model(
    model: &ToyDiT,
    seed: u64,
    sampling_seeds: usize,
) -> Result<CoherenceReport> {
    let cfg = model.config().clone();
    let dims = default_dims(&cfg);
    let eval = synth_sequence(seed.wrapping_add(500), 32, &MotionParams::default(), &dims)?;
    let gt_clouds = sampled_clouds(&eval.meshes, 1024, seed.wrapping_add(900_000))?;

    let mut per_seed = Vec::with_capacity(sampling_seeds);
    for k in 0..sampling_seeds as u64 {
        let mut pair = [0.0f64; 2];
        for (slot, (w_self, w_cross)) in [(2usize, 2usize), (0, 0)].iter().enumerate() {
            let latents = euler_sample(
                model,
                &eval.conditions,
                cfg.latent_tokens,
                cfg.width,
                32,
                Some(WindowOverride {
                    w_self: *w_self,
                    w_cross: *w_cross,
                }),
                seed.wrapping_add(4000 + k),
                0,
            )?;
            let meshes = decode_sequence(&latents, &dims)?;
            let clouds = sampled_clouds(&meshes, 1024, seed.wrapping_add(910_000 + k * 131))?;
            pair[slot] = delta_cd(&clouds, &gt_clouds)?;
        }
        per_seed.push((pair[0], pair[1]));
    }
    let mut w2: Vec<f64> = per_seed.iter().map(|p| p.0).collect();
    let mut w0: Vec<f64> = per_seed.iter().map(|p| p.1).collect();
    w2.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    w0.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    Ok(CoherenceReport {
        median_w2: w2[w2.len() / 2],
        median_w0: w0[w0.len() / 2],
        per_seed,
    })
}

/// Full experiment: train the default model, then compare window widths.
pub fn temporal_coherence_experiment(seed: u64, sampling_seeds: usize) -> Result<CoherenceReport> {
    let trained = train_default(seed, 2000, 1e-3)?;
    temporal_coherence_from_model(&trained.model, seed, sampling_seeds)
}

/// Closed-loop trajectory fixture: an ellipsoid on a known sinusoidal
/// world path, masks rendered by the same rasterizer.
pub struct TrajectoryFixture {
    pub meshes: MeshSequence,
    pub true_path: Vec<[f64; 3]>,
    pub masks: Vec<MaskImage>,
    pub camera: CameraParams,
    pub options: TrackOptions,
}

pub fn trajectory_fixture(seed: u64, frames: usize) -> Result<TrajectoryFixture> {
    let template = crate::flowmatch::unit_sphere_mesh(2);
    let mesh = template.map_vertices(|v| [0.5 * v[0], 0.35 * v[1], 0.42 * v[2]]);
    let meshes = MeshSequence::new(vec![mesh; frames])?;
    let camera = CameraParams::centered(128, 128, 140.0);
    let options = TrackOptions {
        seed,
        ..Default::default()
    };
    let true_path: Vec<[f64; 3]> = (0..frames)
        .map(|i| {
            let t = i as f64 / frames as f64 * 2.0 * std::f64::consts::PI;
            [
                0.55 * t.sin(),
                0.4 * (2.0 * t + 0.7).sin(),
                3.6 + 0.3 * (t + 1.3).sin(),
            ]
        })
        .collect();
    let masks = true_path
        .iter()
        .enumerate()
        .map(|(i, theta)| {
            rasterize_silhouette(
                meshes.frame(i),
                theta,
                &camera,
                options.sigma,
                options.samples,
                options.seed.wrapping_add(i as u64),
                i,
            )
        })
        .collect::<Result<_>>()?;
    Ok(TrajectoryFixture {
        meshes,
        true_path,
        masks,
        camera,
        options,
    })
}

impl TrajectoryFixture {
    pub fn recover(&self, steps: usize) -> Result<Trajectory> {
        let opts = TrackOptions {
            steps,
            ..self.options.clone()
        };
        optimize_trajectory(&self.meshes, &self.masks, &self.camera, &opts)
    }
}

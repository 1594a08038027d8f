//! Joint recovery of per-frame translations and the focal length from
//! ground-truth silhouettes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::meshio::MeshSequence;
use crate::metrics::sample_surface;
use crate::optim::Adam;
use crate::tensor::{Tape, Tensor};

use super::losses::{adaptive_total_loss_t, dice_loss_t, Branch, LossWeights};
use super::mask::MaskImage;
use super::raster::{splat_mask, CameraParams};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrackOptions {
    pub steps: usize,
    pub lr: f64,
    pub sigma: f64,
    pub samples: usize,
    pub weights: LossWeights,
    pub seed: u64,
    /// Replaces the centroid-matching initialization when set (one entry
    /// per frame).
    pub init_override: Option<Vec<[f64; 3]>>,
}

impl Default for TrackOptions {
    fn default() -> Self {
        Self {
            steps: 500,
            lr: 0.02,
            sigma: 1.5,
            samples: 2048,
            weights: LossWeights::default(),
            seed: 0,
            init_override: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FrameFit {
    pub frame: usize,
    pub tx: f64,
    pub ty: f64,
    pub tz: f64,
    pub dice_coefficient: f64,
}

/// Optimization outcome: recovered poses, refined focal length, loss
/// history, and the per-step branch selections.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Trajectory {
    pub per_frame: Vec<FrameFit>,
    pub focal: f64,
    pub loss_trace: Vec<f64>,
    /// `branch_log[step][frame]`; skipped frames carry no entry, so the
    /// inner index runs over active frames only.
    pub branch_log: Vec<Vec<Branch>>,
    /// Frames skipped for zero-mass ground truth.
    pub skipped_frames: Vec<usize>,
}

/// Pick the starting translation: match the first usable mask's centroid
/// at a depth where the mesh's extent subtends the mask's support height.
fn initial_translation(
    meshes: &MeshSequence,
    gt: &MaskImage,
    cam: &CameraParams,
) -> Result<[f64; 3]> {
    let (lo, hi) = meshes.frame(0).bounding_box()?;
    let extent = (0..3).map(|a| hi[a] - lo[a]).fold(0.0f64, f64::max);
    let mesh_center = [
        0.5 * (lo[0] + hi[0]),
        0.5 * (lo[1] + hi[1]),
        0.5 * (lo[2] + hi[2]),
    ];

    let support = gt
        .support_box(0.5)
        .or_else(|| gt.support_box(0.1))
        .ok_or_else(|| Error::EmptyMask("ground-truth mask has no support".into()))?;
    let height_px = ((support.3 - support.1).max(support.2 - support.0) + 1) as f64;
    let depth = (cam.focal * extent / height_px).max(extent);

    let (cx_norm, cy_norm) = gt.centroid()?;
    let u = cx_norm * cam.width as f64;
    let v = cy_norm * cam.height as f64;
    let x = depth * (u - cam.cx) / cam.focal;
    let y = depth * (v - cam.cy) / cam.focal;
    Ok([
        x - mesh_center[0],
        y - mesh_center[1],
        depth - mesh_center[2],
    ])
}

/// Adam descent on the adaptive mask loss, jointly over all frame
/// translations and the shared focal length.
pub fn optimize_trajectory(
    meshes: &MeshSequence,
    gt_masks: &[MaskImage],
    cam0: &CameraParams,
    opts: &TrackOptions,
) -> Result<Trajectory> {
    cam0.validate()?;
    opts.weights.validate()?;
    if gt_masks.len() != meshes.len() {
        return Err(Error::InvalidInput(format!(
            "{} masks for {} frames",
            gt_masks.len(),
            meshes.len()
        )));
    }
    for m in gt_masks {
        if m.width() != cam0.width || m.height() != cam0.height {
            return Err(Error::ShapeMismatch(format!(
                "mask {}x{} vs camera {}x{}",
                m.width(),
                m.height(),
                cam0.width,
                cam0.height
            )));
        }
    }

    let n_frames = meshes.len();
    let mut active: Vec<usize> = Vec::new();
    let mut skipped: Vec<usize> = Vec::new();
    for (i, m) in gt_masks.iter().enumerate() {
        if m.total_mass() > 0.0 {
            active.push(i);
        } else {
            eprintln!("warning: frame {i} has a zero-mass ground-truth mask; skipped");
            skipped.push(i);
        }
    }
    if active.is_empty() {
        return Err(Error::InvalidInput(
            "every ground-truth mask has zero mass".into(),
        ));
    }

    // Fixed surface samples per frame keep the loss deterministic.
    let clouds: Vec<Vec<[f64; 3]>> = (0..n_frames)
        .map(|i| {
            Ok(sample_surface(
                meshes.frame(i),
                opts.samples,
                opts.seed.wrapping_add(i as u64),
            )?
            .points()
            .to_vec())
        })
        .collect::<Result<_>>()?;

    let gt_tensors: Vec<Tensor> = gt_masks
        .iter()
        .map(|m| Tensor::from_vec(&[m.height(), m.width()], m.data().to_vec()))
        .collect::<Result<_>>()?;
    let gt_centroids: Vec<(f64, f64)> = gt_masks
        .iter()
        .map(|m| m.centroid().unwrap_or((0.5, 0.5)))
        .collect();

    let init = match &opts.init_override {
        Some(init) => {
            if init.len() != n_frames {
                return Err(Error::InvalidInput(format!(
                    "init override covers {} of {n_frames} frames",
                    init.len()
                )));
            }
            init.clone()
        }
        None => {
            let theta0 = initial_translation(meshes, &gt_masks[active[0]], cam0)?;
            vec![theta0; n_frames]
        }
    };

    // Parameter layout: one [3] per frame, focal last.
    let mut values: Vec<Vec<f64>> = init.iter().map(|t| t.to_vec()).collect();
    values.push(vec![cam0.focal]);
    let sizes: Vec<usize> = values.iter().map(Vec::len).collect();
    let mut adam = Adam::with_defaults(opts.lr, &sizes);

    let mut loss_trace = Vec::with_capacity(opts.steps);
    let mut branch_log = Vec::with_capacity(opts.steps);

    for _step in 0..opts.steps {
        let mut grads: Vec<Vec<f64>> = sizes.iter().map(|&n| vec![0.0; n]).collect();
        let mut step_loss = 0.0;
        let mut branches = Vec::with_capacity(active.len());
        let inv_active = 1.0 / active.len() as f64;

        for &i in &active {
            let tape = Tape::new();
            let theta = Tensor::from_vec(&[3], values[i].clone())?.watch(&tape);
            let focal = Tensor::scalar(values[n_frames][0]).watch(&tape);
            let mask = splat_mask(&clouds[i], &theta, &focal, cam0, opts.sigma, i)?;
            let (loss, branch) =
                adaptive_total_loss_t(&mask, &gt_tensors[i], gt_centroids[i], &opts.weights)?;
            branches.push(branch);
            let loss = loss.scale(inv_active);
            step_loss += loss.item()?;
            let g = loss.backward()?;
            if let Some(gt) = g.wrt(&theta) {
                for (acc, v) in grads[i].iter_mut().zip(gt.data()) {
                    *acc += v;
                }
            }
            if let Some(gf) = g.wrt(&focal) {
                grads[n_frames][0] += gf.data()[0];
            }
        }

        if !step_loss.is_finite() {
            return Err(Error::Numeric(format!(
                "non-finite trajectory loss at step {_step}"
            )));
        }
        loss_trace.push(step_loss);
        branch_log.push(branches);
        adam.step(&mut values, &grads);
        // Keep the focal length physical.
        values[n_frames][0] = values[n_frames][0].max(1.0);
    }

    let focal = values[n_frames][0];
    let mut per_frame = Vec::with_capacity(n_frames);
    for i in 0..n_frames {
        let theta = Tensor::from_vec(&[3], values[i].clone())?;
        let focal_t = Tensor::scalar(focal);
        let dice_coeff = if gt_masks[i].total_mass() > 0.0 {
            let mask = splat_mask(&clouds[i], &theta, &focal_t, cam0, opts.sigma, i)?;
            1.0 - dice_loss_t(&mask, &gt_tensors[i])?.item()?
        } else {
            0.0
        };
        per_frame.push(FrameFit {
            frame: i,
            tx: values[i][0],
            ty: values[i][1],
            tz: values[i][2],
            dice_coefficient: dice_coeff,
        });
    }

    Ok(Trajectory {
        per_frame,
        focal,
        loss_trace,
        branch_log,
        skipped_frames: skipped,
    })
}

/// Render the recovered poses and compare mask centroids against the
/// ground truth, in pixels. Returns the RMS over frames with valid masks.
pub fn reprojected_centroid_rms(
    meshes: &MeshSequence,
    gt_masks: &[MaskImage],
    trajectory: &Trajectory,
    cam: &CameraParams,
    opts: &TrackOptions,
) -> Result<f64> {
    let mut sum_sq = 0.0;
    let mut count = 0usize;
    for fit in &trajectory.per_frame {
        let i = fit.frame;
        if gt_masks[i].total_mass() <= 0.0 {
            continue;
        }
        let cam_refined = CameraParams {
            focal: trajectory.focal,
            ..cam.clone()
        };
        let rendered = super::raster::rasterize_silhouette(
            meshes.frame(i),
            &[fit.tx, fit.ty, fit.tz],
            &cam_refined,
            opts.sigma,
            opts.samples,
            opts.seed.wrapping_add(i as u64),
            i,
        )?;
        let (rx, ry) = rendered.centroid()?;
        let (gx, gy) = gt_masks[i].centroid()?;
        let dx = (rx - gx) * cam.width as f64;
        let dy = (ry - gy) * cam.height as f64;
        sum_sq += dx * dx + dy * dy;
        count += 1;
    }
    if count == 0 {
        return Err(Error::InvalidInput("no frames with valid masks".into()));
    }
    Ok((sum_sq / count as f64).sqrt())
}

//! Differentiable soft-silhouette rasterization by Gaussian point splats.
//!
//! Surface points are translated, projected through a pinhole camera, and
//! splatted as isotropic Gaussians; per-pixel coverage composites as
//! `m = 1 - prod_k (1 - g_k)`. The op is registered on the tape with a
//! hand-derived adjoint w.r.t. the translation and the focal length.

use std::rc::Rc;

use crate::error::{Error, Result};
use crate::meshio::MeshFrame;
use crate::metrics::sample_surface;
use crate::tensor::{CustomOp, Tensor};

use super::mask::MaskImage;

/// Static pinhole camera; pose is the identity.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct CameraParams {
    /// Focal length in pixels.
    pub focal: f64,
    /// Principal point in pixels.
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl CameraParams {
    pub fn centered(width: usize, height: usize, focal: f64) -> Self {
        Self {
            focal,
            cx: width as f64 / 2.0,
            cy: height as f64 / 2.0,
            width,
            height,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.focal <= 0.0 {
            return Err(Error::InvalidInput(format!(
                "focal length must be positive, got {}",
                self.focal
            )));
        }
        if self.cx < 0.0
            || self.cy < 0.0
            || self.cx > self.width as f64
            || self.cy > self.height as f64
        {
            return Err(Error::InvalidInput(
                "principal point must lie inside the image".into(),
            ));
        }
        Ok(())
    }
}

/// Splat support radius in sigmas. exp(-cutoff^2/2) ~ 2e-11, below every
/// gradient tolerance in use.
const CUTOFF_SIGMAS: f64 = 7.0;
/// Floor for survival factors (1 - g) so the adjoint never divides by zero.
const SURVIVAL_FLOOR: f64 = 1e-12;

struct SplatForward {
    /// Survival product per pixel; mask = 1 - survival.
    survival: Vec<f64>,
    /// Projected pixel position per point.
    proj: Vec<[f64; 2]>,
    /// Camera-space position per point.
    cam_xyz: Vec<[f64; 3]>,
}

fn splat_forward(
    points: &[[f64; 3]],
    theta: &[f64; 3],
    focal: f64,
    cam: &CameraParams,
    sigma: f64,
    frame: usize,
) -> Result<SplatForward> {
    let (w, h) = (cam.width, cam.height);
    let mut survival = vec![1.0f64; w * h];
    let mut proj = Vec::with_capacity(points.len());
    let mut cam_xyz = Vec::with_capacity(points.len());
    let radius = CUTOFF_SIGMAS * sigma;
    let inv_two_sigma2 = 1.0 / (2.0 * sigma * sigma);

    for p in points {
        let x = p[0] + theta[0];
        let y = p[1] + theta[1];
        let z = p[2] + theta[2];
        if z <= 0.0 {
            return Err(Error::BehindCamera { frame });
        }
        let u = focal * x / z + cam.cx;
        let v = focal * y / z + cam.cy;
        proj.push([u, v]);
        cam_xyz.push([x, y, z]);

        let x0 = ((u - radius - 0.5).floor().max(0.0)) as usize;
        let x1 = ((u + radius - 0.5).ceil().min(w as f64 - 1.0)).max(0.0) as usize;
        let y0 = ((v - radius - 0.5).floor().max(0.0)) as usize;
        let y1 = ((v + radius - 0.5).ceil().min(h as f64 - 1.0)).max(0.0) as usize;
        if u + radius < 0.5 || v + radius < 0.5 {
            continue;
        }
        for py in y0..=y1 {
            let dy = py as f64 + 0.5 - v;
            for px in x0..=x1 {
                let dx = px as f64 + 0.5 - u;
                let r2 = dx * dx + dy * dy;
                if r2 > radius * radius {
                    continue;
                }
                let g = (-r2 * inv_two_sigma2).exp();
                survival[py * w + px] *= (1.0 - g).max(SURVIVAL_FLOOR);
            }
        }
    }
    Ok(SplatForward {
        survival,
        proj,
        cam_xyz,
    })
}

/// Tape node: parents are `[theta (3), focal (1)]`.
struct SplatOp {
    cam: CameraParams,
    sigma: f64,
    focal: f64,
    forward: SplatForward,
}

impl CustomOp<f64> for SplatOp {
    fn name(&self) -> &'static str {
        "silhouette_splat"
    }

    fn backward(&self, grad_out: &[f64]) -> Vec<Vec<f64>> {
        let (w, h) = (self.cam.width, self.cam.height);
        let radius = CUTOFF_SIGMAS * self.sigma;
        let inv_sigma2 = 1.0 / (self.sigma * self.sigma);
        let inv_two_sigma2 = 0.5 * inv_sigma2;
        let mut d_theta = vec![0.0f64; 3];
        let mut d_focal = 0.0f64;

        for (i, uv) in self.forward.proj.iter().enumerate() {
            let [u, v] = *uv;
            let [x, y, z] = self.forward.cam_xyz[i];
            let x0 = ((u - radius - 0.5).floor().max(0.0)) as usize;
            let x1 = ((u + radius - 0.5).ceil().min(w as f64 - 1.0)).max(0.0) as usize;
            let y0 = ((v - radius - 0.5).floor().max(0.0)) as usize;
            let y1 = ((v + radius - 0.5).ceil().min(h as f64 - 1.0)).max(0.0) as usize;
            if u + radius < 0.5 || v + radius < 0.5 {
                continue;
            }
            let mut gu = 0.0f64;
            let mut gv = 0.0f64;
            for py in y0..=y1 {
                let dy = py as f64 + 0.5 - v;
                for px in x0..=x1 {
                    let dx = px as f64 + 0.5 - u;
                    let r2 = dx * dx + dy * dy;
                    if r2 > radius * radius {
                        continue;
                    }
                    let g = (-r2 * inv_two_sigma2).exp();
                    let idx = py * w + px;
                    // dm/dg_i = survival / (1 - g_i); dg/du = g * (p - u)/s^2,
                    // and p - u = -d, so dg/du = -g * d / s^2... careful:
                    // g = exp(-((px+0.5-u)^2+...)/2s^2), d/du g = g * dx / s^2.
                    let dm_dg = self.forward.survival[idx] / (1.0 - g).max(SURVIVAL_FLOOR);
                    let scale = grad_out[idx] * dm_dg * g * inv_sigma2;
                    gu += scale * dx;
                    gv += scale * dy;
                }
            }
            // u = f x / z + cx, v = f y / z + cy.
            let f_over_z = self.focal / z;
            d_theta[0] += gu * f_over_z;
            d_theta[1] += gv * f_over_z;
            d_theta[2] += -gu * self.focal * x / (z * z) - gv * self.focal * y / (z * z);
            d_focal += gu * x / z + gv * y / z;
        }
        vec![d_theta, vec![d_focal]]
    }
}

/// Differentiable mask from pre-sampled surface points. `theta` is a `[3]`
/// tensor, `focal` a `[1]` tensor; both may be watched on a tape.
pub fn splat_mask(
    points: &[[f64; 3]],
    theta: &Tensor,
    focal: &Tensor,
    cam: &CameraParams,
    sigma: f64,
    frame: usize,
) -> Result<Tensor> {
    if theta.len() != 3 || focal.len() != 1 {
        return Err(Error::ShapeMismatch(
            "splat_mask wants theta [3] and focal [1]".into(),
        ));
    }
    if sigma <= 0.0 {
        return Err(Error::InvalidInput("splat sigma must be positive".into()));
    }
    let th = [theta.data()[0], theta.data()[1], theta.data()[2]];
    let f = focal.data()[0];
    let forward = splat_forward(points, &th, f, cam, sigma, frame)?;
    let mask: Vec<f64> = forward.survival.iter().map(|s| 1.0 - s).collect();
    let op = SplatOp {
        cam: cam.clone(),
        sigma,
        focal: f,
        forward,
    };
    Tensor::from_custom_op(&[theta, focal], &[cam.height, cam.width], mask, Rc::new(op))
}

/// Render a mesh silhouette: sample `samples` surface points, translate by
/// `theta`, project, splat. A zero point budget yields an all-zero mask.
pub fn rasterize_silhouette(
    mesh: &MeshFrame,
    theta: &[f64; 3],
    cam: &CameraParams,
    sigma: f64,
    samples: usize,
    seed: u64,
    frame: usize,
) -> Result<MaskImage> {
    cam.validate()?;
    if samples == 0 {
        return Ok(MaskImage::zeros(cam.width, cam.height));
    }
    let cloud = sample_surface(mesh, samples, seed)?;
    let forward = splat_forward(cloud.points(), theta, cam.focal, cam, sigma, frame)?;
    MaskImage::new(
        cam.width,
        cam.height,
        forward.survival.iter().map(|s| 1.0 - s).collect(),
    )
}

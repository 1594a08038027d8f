//! Silhouette-based global trajectory recovery for static-camera clips:
//! a differentiable Gaussian-splat rasterizer, adaptive mask losses, and
//! an Adam loop over per-frame translations plus the focal length.

mod losses;
mod mask;
mod optimize;
mod raster;

pub use losses::{
    adaptive_total_loss, adaptive_total_loss_t, bce_loss, bce_loss_t, center_loss, center_term_t,
    centroid_t, dice_coefficient, dice_loss, dice_loss_t, l1_loss_t, mask_loss_t, Branch,
    LossWeights,
};
pub use mask::{mask_centroid, read_mask, write_mask, MaskImage};
pub use optimize::{
    optimize_trajectory, reprojected_centroid_rms, FrameFit, TrackOptions, Trajectory,
};
pub use raster::{rasterize_silhouette, splat_mask, CameraParams};

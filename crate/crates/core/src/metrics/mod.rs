//! Frame-level and temporal evaluation of predicted vs ground-truth mesh
//! sequences: Chamfer distance, F-score family, temporal Chamfer delta,
//! voxel-occupancy KL, and feature-trajectory cosine/DTW.

mod chamfer;
mod features;
mod occupancy;
mod report;
mod sampling;

pub use chamfer::{chamfer, delta_cd, f_score, nearest_distances};
pub use features::{
    dtw_from_cost, feature_descriptor, temporal_feature_compare, FeatureTrack, FEATURE_DIM,
    GEOMETRIC_ENCODER_ID,
};
pub use occupancy::{occupancy_kl, OccupancyGrid};
pub use report::{evaluate_sequences, MetricParams, MetricReport};
pub use sampling::sample_surface;

use crate::error::{Error, Result};

/// Points in world units.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud(Vec<[f64; 3]>);

impl PointCloud {
    pub fn new(points: Vec<[f64; 3]>) -> Result<Self> {
        if points.iter().any(|p| p.iter().any(|c| !c.is_finite())) {
            return Err(Error::Numeric("point cloud has non-finite coordinates".into()));
        }
        Ok(Self(points))
    }

    pub fn points(&self) -> &[[f64; 3]] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

pub(crate) fn dist(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    (dx * dx + dy * dy + dz * dz).sqrt()
}

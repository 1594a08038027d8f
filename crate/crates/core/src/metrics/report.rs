//! Sequence-pair evaluation orchestration and the serialized report.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::meshio::MeshSequence;

use super::{
    chamfer, delta_cd, f_score, occupancy_kl, sample_surface, temporal_feature_compare,
    FeatureTrack, PointCloud,
};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricParams {
    /// Surface points sampled per frame.
    pub points_per_frame: usize,
    /// F-score distance threshold.
    pub tau: f64,
    /// Occupancy grid resolution per axis.
    pub grid_resolution: usize,
    /// Occupancy smoothing constant.
    pub epsilon: f64,
    pub seed: u64,
}

impl Default for MetricParams {
    fn default() -> Self {
        Self {
            points_per_frame: 4096,
            tau: 0.02,
            grid_resolution: 32,
            epsilon: 1e-8,
            seed: 0,
        }
    }
}

/// Every frame-level and temporal metric for one sequence pair, plus the
/// parameters that produced them.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricReport {
    pub cd: f64,
    pub f_score: f64,
    pub precision: f64,
    pub recall: f64,
    pub delta_cd: f64,
    pub feature_cosine: f64,
    pub feature_dtw: f64,
    pub occupancy_kl: f64,
    pub frames: usize,
    pub encoder_id: String,
    pub params: MetricParams,
}

impl MetricReport {
    /// Fixed-order table matching the benchmark column layout.
    pub fn table(&self) -> String {
        format!(
            "CD        {:>10.4}\nF-score   {:>10.4}\nPrecision {:>10.4}\nRecall    {:>10.4}\nDelta-CD  {:>10.4}\nFE Cos    {:>10.4}\nFeat. DTW {:>10.4}\nOcc. KL   {:>10.4}",
            self.cd,
            self.f_score,
            self.precision,
            self.recall,
            self.delta_cd,
            self.feature_cosine,
            self.feature_dtw,
            self.occupancy_kl,
        )
    }
}

fn frame_seed(base: u64, frame: usize) -> u64 {
    base.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(frame as u64)
}

/// Sample both sequences once per frame and compute the full metric set.
/// Deterministic for a fixed seed.
pub fn evaluate_sequences(
    pred: &MeshSequence,
    gt: &MeshSequence,
    params: &MetricParams,
) -> Result<MetricReport> {
    if pred.len() != gt.len() {
        return Err(Error::InvalidInput(format!(
            "frame counts differ: {} vs {}",
            pred.len(),
            gt.len()
        )));
    }
    let t_len = pred.len();
    let n = params.points_per_frame;

    // Both sides share each frame's sampling seed, so identical inputs
    // produce identical clouds and every metric hits its exact identity.
    let pred_clouds: Vec<PointCloud> = (0..t_len)
        .map(|t| sample_surface(pred.frame(t), n, frame_seed(params.seed, t)))
        .collect::<Result<_>>()?;
    let gt_clouds: Vec<PointCloud> = (0..t_len)
        .map(|t| sample_surface(gt.frame(t), n, frame_seed(params.seed, t)))
        .collect::<Result<_>>()?;

    let mut cd_sum = 0.0;
    let mut precision_sum = 0.0;
    let mut recall_sum = 0.0;
    let mut f_sum = 0.0;
    for t in 0..t_len {
        cd_sum += chamfer(&pred_clouds[t], &gt_clouds[t])?;
        let (p, r, f) = f_score(&pred_clouds[t], &gt_clouds[t], params.tau)?;
        precision_sum += p;
        recall_sum += r;
        f_sum += f;
    }
    let tf = t_len as f64;

    let (dcd, okl) = if t_len >= 2 {
        (
            delta_cd(&pred_clouds, &gt_clouds)?,
            occupancy_kl(
                &pred_clouds,
                &gt_clouds,
                params.grid_resolution,
                params.epsilon,
            )?,
        )
    } else {
        (0.0, 0.0)
    };

    let pred_track = FeatureTrack::from_clouds(&pred_clouds)?;
    let gt_track = FeatureTrack::from_clouds(&gt_clouds)?;
    let (cosine, dtw) = temporal_feature_compare(&pred_track, &gt_track)?;

    Ok(MetricReport {
        cd: cd_sum / tf,
        f_score: f_sum / tf,
        precision: precision_sum / tf,
        recall: recall_sum / tf,
        delta_cd: dcd,
        feature_cosine: cosine,
        feature_dtw: dtw,
        occupancy_kl: okl,
        frames: t_len,
        encoder_id: pred_track.encoder_id().to_string(),
        params: params.clone(),
    })
}

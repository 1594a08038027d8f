//! Voxel-occupancy histograms and the temporal occupancy-KL metric.

use crate::error::{Error, Result};

use super::PointCloud;

/// Counts over a `K^3` voxelization of a fixed bounding box.
#[derive(Debug, Clone)]
pub struct OccupancyGrid {
    resolution: usize,
    counts: Vec<u64>,
    lo: [f64; 3],
    hi: [f64; 3],
}

impl OccupancyGrid {
    /// Bin a cloud into `k^3` voxels over the given box.
    pub fn voxelize(cloud: &PointCloud, k: usize, lo: [f64; 3], hi: [f64; 3]) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidInput("grid resolution must be >= 1".into()));
        }
        let mut counts = vec![0u64; k * k * k];
        for p in cloud.points() {
            let mut c = [0usize; 3];
            for a in 0..3 {
                let t = (p[a] - lo[a]) / (hi[a] - lo[a]);
                c[a] = ((t * k as f64).floor() as isize).clamp(0, k as isize - 1) as usize;
            }
            counts[(c[0] * k + c[1]) * k + c[2]] += 1;
        }
        Ok(Self {
            resolution: k,
            counts,
            lo,
            hi,
        })
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn bounds(&self) -> ([f64; 3], [f64; 3]) {
        (self.lo, self.hi)
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Smoothed probability distribution `(o_i + eps) / sum(o + eps)`.
    pub fn distribution(&self, eps: f64) -> Vec<f64> {
        let total = self.total() as f64 + eps * self.counts.len() as f64;
        self.counts
            .iter()
            .map(|&c| (c as f64 + eps) / total)
            .collect()
    }
}

pub(crate) fn kl_divergence(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .map(|(&pi, &qi)| if pi > 0.0 { pi * (pi / qi).ln() } else { 0.0 })
        .sum()
}

/// Shared bounding box over every frame of both sequences. Degenerate
/// axes are expanded by 1e-6; the flag reports whether that happened.
fn global_bounds(seqs: [&[PointCloud]; 2]) -> ([f64; 3], [f64; 3], bool) {
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for seq in seqs {
        for cloud in seq {
            for p in cloud.points() {
                for a in 0..3 {
                    lo[a] = lo[a].min(p[a]);
                    hi[a] = hi[a].max(p[a]);
                }
            }
        }
    }
    let mut expanded = false;
    for a in 0..3 {
        if hi[a] - lo[a] <= 0.0 {
            lo[a] -= 5e-7;
            hi[a] += 5e-7;
            expanded = true;
        }
    }
    (lo, hi, expanded)
}

/// KL divergences between consecutive-frame occupancy distributions of one
/// sequence, `KL(p_{t+1} || p_t)`, over a fixed box.
pub fn consecutive_kl(
    seq: &[PointCloud],
    k: usize,
    eps: f64,
    lo: [f64; 3],
    hi: [f64; 3],
) -> Result<Vec<f64>> {
    let dists: Vec<Vec<f64>> = seq
        .iter()
        .map(|c| Ok(OccupancyGrid::voxelize(c, k, lo, hi)?.distribution(eps)))
        .collect::<Result<_>>()?;
    Ok(dists
        .windows(2)
        .map(|w| kl_divergence(&w[1], &w[0]))
        .collect())
}

/// Temporal occupancy KL: mean absolute difference between the two
/// sequences' consecutive-frame KL profiles on a shared global box.
pub fn occupancy_kl(
    pred: &[PointCloud],
    gt: &[PointCloud],
    k: usize,
    eps: f64,
) -> Result<f64> {
    if pred.len() != gt.len() {
        return Err(Error::InvalidInput(format!(
            "sequence lengths differ: {} vs {}",
            pred.len(),
            gt.len()
        )));
    }
    if pred.len() < 2 {
        return Err(Error::InvalidInput("temporal KL needs >= 2 frames".into()));
    }
    let (lo, hi, expanded) = global_bounds([pred, gt]);
    if expanded {
        eprintln!("warning: degenerate occupancy bounding box expanded by 1e-6");
    }
    let kp = consecutive_kl(pred, k, eps, lo, hi)?;
    let kg = consecutive_kl(gt, k, eps, lo, hi)?;
    let sum: f64 = kp.iter().zip(&kg).map(|(a, b)| (a - b).abs()).sum();
    Ok(sum / kp.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cloud(points: Vec<[f64; 3]>) -> PointCloud {
        PointCloud::new(points).unwrap()
    }

    #[test]
    fn counts_sum_to_points() {
        let c = cloud(vec![[0.1, 0.1, 0.1], [0.9, 0.9, 0.9], [0.5, 0.5, 0.5]]);
        let grid = OccupancyGrid::voxelize(&c, 4, [0.0; 3], [1.0; 3]).unwrap();
        assert_eq!(grid.total(), 3);
    }

    #[test]
    fn distribution_normalizes() {
        let c = cloud(vec![[0.2, 0.2, 0.2]; 7]);
        let grid = OccupancyGrid::voxelize(&c, 8, [0.0; 3], [1.0; 3]).unwrap();
        let p = grid.distribution(1e-8);
        let sum: f64 = p.iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
    }

    #[test]
    fn identical_sequences_give_zero() {
        let seq = vec![
            cloud(vec![[0.1; 3], [0.7, 0.2, 0.3]]),
            cloud(vec![[0.5; 3], [0.9, 0.9, 0.1]]),
            cloud(vec![[0.3; 3]]),
        ];
        assert_eq!(occupancy_kl(&seq, &seq, 32, 1e-8).unwrap(), 0.0);
    }

    #[test]
    fn two_voxel_mass_move_matches_hand_computation() {
        // GT moves all n points from voxel A to voxel B; prediction stays
        // static, so the metric equals KL(p_B-after || p_A-before).
        let n = 12usize;
        let k = 32usize;
        let eps = 1e-8;
        let a = [0.1f64, 0.1, 0.1];
        let b = [0.9f64, 0.9, 0.9];
        let gt = vec![cloud(vec![a; n]), cloud(vec![b; n])];
        let pred = vec![cloud(vec![a; n]), cloud(vec![a; n])];
        let metric = occupancy_kl(&pred, &gt, k, eps).unwrap();

        let cells = (k * k * k) as f64;
        let z = n as f64 + cells * eps;
        let p_hot = (n as f64 + eps) / z;
        let p_cold = eps / z;
        // After the move, mass sits in B (p_hot) where there was p_cold,
        // and in A it is p_cold where there was p_hot; empty cells cancel.
        let expected = p_hot * (p_hot / p_cold).ln() + p_cold * (p_cold / p_hot).ln();
        assert!(
            (metric - expected).abs() < 1e-12 * expected.abs().max(1.0),
            "metric {metric} vs hand value {expected}"
        );
    }

    #[test]
    fn consecutive_kl_nonnegative() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(77);
        let mut seq = Vec::new();
        for _ in 0..5 {
            seq.push(
                cloud(
                    (0..200)
                        .map(|_| {
                            [
                                rng.random::<f64>(),
                                rng.random::<f64>(),
                                rng.random::<f64>(),
                            ]
                        })
                        .collect(),
                ),
            );
        }
        let kls = consecutive_kl(&seq, 8, 1e-8, [0.0; 3], [1.0; 3]).unwrap();
        for kl in kls {
            assert!(kl >= -1e-12, "Gibbs violated: {kl}");
        }
    }
}

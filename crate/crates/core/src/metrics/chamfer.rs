//! Nearest-neighbor distances, Chamfer distance, F-score, and the
//! temporal Chamfer delta.
//!
//! Queries run against an exact double loop up to 10^4 target points and
//! switch to a uniform-grid index above that; both paths return exact
//! nearest neighbors.

use crate::error::{Error, Result};

use super::{dist, PointCloud};

const BRUTE_FORCE_LIMIT: usize = 10_000;

/// Exact nearest-neighbor distance from every point of `from` to `to`.
pub fn nearest_distances(from: &PointCloud, to: &PointCloud) -> Result<Vec<f64>> {
    if from.is_empty() || to.is_empty() {
        return Err(Error::InvalidInput("empty point cloud".into()));
    }
    if to.len() <= BRUTE_FORCE_LIMIT {
        Ok(from
            .points()
            .iter()
            .map(|p| {
                to.points()
                    .iter()
                    .map(|g| dist(p, g))
                    .fold(f64::INFINITY, f64::min)
            })
            .collect())
    } else {
        let grid = PointGrid::build(to);
        Ok(from.points().iter().map(|p| grid.nearest(p)).collect())
    }
}

/// Non-squared bidirectional Chamfer distance,
/// `(mean_p min_g ||p-g|| + mean_g min_p ||g-p||) / 2`.
pub fn chamfer(p: &PointCloud, g: &PointCloud) -> Result<f64> {
    let pg = nearest_distances(p, g)?;
    let gp = nearest_distances(g, p)?;
    let mean_pg: f64 = pg.iter().sum::<f64>() / pg.len() as f64;
    let mean_gp: f64 = gp.iter().sum::<f64>() / gp.len() as f64;
    Ok(0.5 * (mean_pg + mean_gp))
}

/// Precision, recall, and F-score at threshold `tau`. The F-score is zero
/// when precision and recall are both zero.
pub fn f_score(p: &PointCloud, g: &PointCloud, tau: f64) -> Result<(f64, f64, f64)> {
    if tau <= 0.0 {
        return Err(Error::InvalidInput(format!("threshold must be > 0, got {tau}")));
    }
    let pg = nearest_distances(p, g)?;
    let gp = nearest_distances(g, p)?;
    let precision = pg.iter().filter(|&&d| d < tau).count() as f64 / pg.len() as f64;
    let recall = gp.iter().filter(|&&d| d < tau).count() as f64 / gp.len() as f64;
    let f = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Ok((precision, recall, f))
}

/// Chamfer distances between consecutive frames of one sequence.
pub fn consecutive_chamfer(seq: &[PointCloud]) -> Result<Vec<f64>> {
    seq.windows(2).map(|w| chamfer(&w[0], &w[1])).collect()
}

/// Temporal Chamfer delta: mean absolute difference between the
/// consecutive-frame Chamfer profiles of the two sequences.
pub fn delta_cd(pred: &[PointCloud], gt: &[PointCloud]) -> Result<f64> {
    if pred.len() != gt.len() {
        return Err(Error::InvalidInput(format!(
            "sequence lengths differ: {} vs {}",
            pred.len(),
            gt.len()
        )));
    }
    if pred.len() < 2 {
        return Err(Error::InvalidInput("temporal delta needs >= 2 frames".into()));
    }
    let cp = consecutive_chamfer(pred)?;
    let cg = consecutive_chamfer(gt)?;
    let sum: f64 = cp.iter().zip(&cg).map(|(a, b)| (a - b).abs()).sum();
    Ok(sum / cp.len() as f64)
}

/// Uniform-grid index for exact nearest neighbor on large clouds.
struct PointGrid {
    cell: f64,
    lo: [f64; 3],
    dims: [usize; 3],
    buckets: Vec<Vec<[f64; 3]>>,
}

impl PointGrid {
    fn build(cloud: &PointCloud) -> Self {
        let pts = cloud.points();
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for p in pts {
            for a in 0..3 {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
        }
        let target_cells = (pts.len() as f64).cbrt().ceil() as usize;
        let max_extent = (0..3).map(|a| hi[a] - lo[a]).fold(1e-12f64, f64::max);
        let cell = max_extent / target_cells as f64;
        let mut dims = [1usize; 3];
        for a in 0..3 {
            dims[a] = (((hi[a] - lo[a]) / cell).floor() as usize + 1).max(1);
        }
        let mut buckets = vec![Vec::new(); dims[0] * dims[1] * dims[2]];
        for p in pts {
            let idx = Self::cell_of(p, &lo, cell, &dims);
            buckets[idx].push(*p);
        }
        Self {
            cell,
            lo,
            dims,
            buckets,
        }
    }

    fn cell_of(p: &[f64; 3], lo: &[f64; 3], cell: f64, dims: &[usize; 3]) -> usize {
        let mut c = [0usize; 3];
        for a in 0..3 {
            c[a] = (((p[a] - lo[a]) / cell).floor() as isize)
                .clamp(0, dims[a] as isize - 1) as usize;
        }
        (c[0] * dims[1] + c[1]) * dims[2] + c[2]
    }

    fn nearest(&self, p: &[f64; 3]) -> f64 {
        let mut home = [0isize; 3];
        for a in 0..3 {
            home[a] = ((p[a] - self.lo[a]) / self.cell).floor() as isize;
        }
        let max_dim = *self.dims.iter().max().expect("3 dims") as isize;
        let mut best = f64::INFINITY;
        for shell in 0..=(2 * max_dim) {
            // Cells on shell s are at least (s-1) * cell away from p.
            if best.is_finite() && best <= (shell - 1).max(0) as f64 * self.cell {
                break;
            }
            let mut any_cell = false;
            for dx in -shell..=shell {
                for dy in -shell..=shell {
                    for dz in -shell..=shell {
                        if dx.abs().max(dy.abs()).max(dz.abs()) != shell {
                            continue;
                        }
                        let (x, y, z) = (home[0] + dx, home[1] + dy, home[2] + dz);
                        if x < 0
                            || y < 0
                            || z < 0
                            || x >= self.dims[0] as isize
                            || y >= self.dims[1] as isize
                            || z >= self.dims[2] as isize
                        {
                            continue;
                        }
                        any_cell = true;
                        let idx = (x as usize * self.dims[1] + y as usize) * self.dims[2]
                            + z as usize;
                        for g in &self.buckets[idx] {
                            best = best.min(dist(p, g));
                        }
                    }
                }
            }
            if !any_cell && best.is_finite() {
                break;
            }
        }
        best
    }
}

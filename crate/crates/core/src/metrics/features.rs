//! Per-frame feature descriptors and temporal feature comparison.
//!
//! The encoder is a deterministic 64-dim geometric descriptor standing
//! behind the generic [`FeatureTrack`] interface: centroid (3), bounding
//! box extents (3), sorted covariance eigenvalues (3), a 32-bin radial
//! histogram, and a 23-bin height histogram. Scale-sensitive by design.

use crate::error::{Error, Result};

use super::PointCloud;

pub const FEATURE_DIM: usize = 64;
pub const GEOMETRIC_ENCODER_ID: &str = "geometric-v1-64";

const RADIAL_BINS: usize = 32;
const HEIGHT_BINS: usize = 23;

/// Per-frame feature rows of fixed width, tagged with the encoder that
/// produced them.
#[derive(Debug, Clone)]
pub struct FeatureTrack {
    features: Vec<Vec<f64>>,
    encoder_id: String,
}

impl FeatureTrack {
    pub fn new(features: Vec<Vec<f64>>, encoder_id: impl Into<String>) -> Result<Self> {
        if features.is_empty() {
            return Err(Error::InvalidInput("feature track needs >= 1 frame".into()));
        }
        let d = features[0].len();
        if features.iter().any(|f| f.len() != d) {
            return Err(Error::ShapeMismatch("feature width varies across frames".into()));
        }
        Ok(Self {
            features,
            encoder_id: encoder_id.into(),
        })
    }

    pub fn from_clouds(clouds: &[PointCloud]) -> Result<Self> {
        let features = clouds
            .iter()
            .map(feature_descriptor)
            .collect::<Result<Vec<_>>>()?;
        Self::new(features, GEOMETRIC_ENCODER_ID)
    }

    pub fn frames(&self) -> usize {
        self.features.len()
    }

    pub fn dim(&self) -> usize {
        self.features[0].len()
    }

    pub fn encoder_id(&self) -> &str {
        &self.encoder_id
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.features
    }

    fn mean_pooled(&self) -> Vec<f64> {
        let d = self.dim();
        let mut mean = vec![0.0; d];
        for row in &self.features {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        for m in &mut mean {
            *m /= self.features.len() as f64;
        }
        mean
    }
}

/// Eigenvalues of a symmetric 3x3 matrix, descending (closed form).
fn symmetric_eigenvalues(m: [[f64; 3]; 3]) -> [f64; 3] {
    let p1 = m[0][1] * m[0][1] + m[0][2] * m[0][2] + m[1][2] * m[1][2];
    if p1 == 0.0 {
        let mut diag = [m[0][0], m[1][1], m[2][2]];
        diag.sort_by(|a, b| b.partial_cmp(a).expect("finite"));
        return diag;
    }
    let q = (m[0][0] + m[1][1] + m[2][2]) / 3.0;
    let p2 = (m[0][0] - q).powi(2) + (m[1][1] - q).powi(2) + (m[2][2] - q).powi(2) + 2.0 * p1;
    let p = (p2 / 6.0).sqrt();
    let inv_p = 1.0 / p;
    let b = |i: usize, j: usize| inv_p * (m[i][j] - if i == j { q } else { 0.0 });
    let det_b = b(0, 0) * (b(1, 1) * b(2, 2) - b(1, 2) * b(2, 1))
        - b(0, 1) * (b(1, 0) * b(2, 2) - b(1, 2) * b(2, 0))
        + b(0, 2) * (b(1, 0) * b(2, 1) - b(1, 1) * b(2, 0));
    let r = (det_b / 2.0).clamp(-1.0, 1.0);
    let phi = r.acos() / 3.0;
    let e1 = q + 2.0 * p * phi.cos();
    let e3 = q + 2.0 * p * (phi + 2.0 * std::f64::consts::PI / 3.0).cos();
    let e2 = 3.0 * q - e1 - e3;
    [e1, e2, e3]
}

/// Deterministic 64-dim geometric descriptor of a point cloud.
pub fn feature_descriptor(cloud: &PointCloud) -> Result<Vec<f64>> {
    if cloud.is_empty() {
        return Err(Error::InvalidInput("empty point cloud".into()));
    }
    let pts = cloud.points();
    let n = pts.len() as f64;

    let mut centroid = [0.0f64; 3];
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for p in pts {
        for a in 0..3 {
            centroid[a] += p[a];
            lo[a] = lo[a].min(p[a]);
            hi[a] = hi[a].max(p[a]);
        }
    }
    for c in centroid.iter_mut() {
        *c /= n;
    }

    let mut cov = [[0.0f64; 3]; 3];
    for p in pts {
        let d = [p[0] - centroid[0], p[1] - centroid[1], p[2] - centroid[2]];
        for a in 0..3 {
            for b in 0..3 {
                cov[a][b] += d[a] * d[b];
            }
        }
    }
    for row in cov.iter_mut() {
        for v in row.iter_mut() {
            *v /= n;
        }
    }
    let eig = symmetric_eigenvalues(cov);

    let radii: Vec<f64> = pts
        .iter()
        .map(|p| {
            ((p[0] - centroid[0]).powi(2)
                + (p[1] - centroid[1]).powi(2)
                + (p[2] - centroid[2]).powi(2))
            .sqrt()
        })
        .collect();
    let r_max = radii.iter().cloned().fold(0.0f64, f64::max);
    let mut radial = vec![0.0f64; RADIAL_BINS];
    for &r in &radii {
        let bin = if r_max > 0.0 {
            (((r / r_max) * RADIAL_BINS as f64).floor() as usize).min(RADIAL_BINS - 1)
        } else {
            0
        };
        radial[bin] += 1.0;
    }
    for v in &mut radial {
        *v /= n;
    }

    let (z_lo, z_hi) = (lo[2], hi[2]);
    let z_span = z_hi - z_lo;
    let mut height = vec![0.0f64; HEIGHT_BINS];
    for p in pts {
        let bin = if z_span > 0.0 {
            ((((p[2] - z_lo) / z_span) * HEIGHT_BINS as f64).floor() as usize)
                .min(HEIGHT_BINS - 1)
        } else {
            0
        };
        height[bin] += 1.0;
    }
    for v in &mut height {
        *v /= n;
    }

    let mut out = Vec::with_capacity(FEATURE_DIM);
    out.extend_from_slice(&centroid);
    out.extend([hi[0] - lo[0], hi[1] - lo[1], hi[2] - lo[2]]);
    out.extend_from_slice(&eig);
    out.extend(radial);
    out.extend(height);
    debug_assert_eq!(out.len(), FEATURE_DIM);
    Ok(out)
}

/// DTW alignment cost given a precomputed pairwise cost matrix
/// (`cost[i][j]`), with `D(0,0) = 0` and `+inf` borders.
pub fn dtw_from_cost(cost: &[Vec<f64>]) -> f64 {
    let rows = cost.len();
    let cols = cost[0].len();
    let mut d = vec![vec![f64::INFINITY; cols + 1]; rows + 1];
    d[0][0] = 0.0;
    for i in 1..=rows {
        for j in 1..=cols {
            let best = d[i - 1][j].min(d[i][j - 1]).min(d[i - 1][j - 1]);
            d[i][j] = cost[i - 1][j - 1] + best;
        }
    }
    d[rows][cols]
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Cosine similarity of mean-pooled features plus the DTW alignment cost
/// over per-frame feature rows.
pub fn temporal_feature_compare(a: &FeatureTrack, b: &FeatureTrack) -> Result<(f64, f64)> {
    if a.dim() != b.dim() {
        return Err(Error::ShapeMismatch(format!(
            "feature widths differ: {} vs {}",
            a.dim(),
            b.dim()
        )));
    }
    let ma = a.mean_pooled();
    let mb = b.mean_pooled();
    let na = euclidean(&ma, &vec![0.0; ma.len()]);
    let nb = euclidean(&mb, &vec![0.0; mb.len()]);
    if na == 0.0 || nb == 0.0 {
        return Err(Error::Numeric("cosine undefined for zero-norm mean feature".into()));
    }
    let dot: f64 = ma.iter().zip(&mb).map(|(x, y)| x * y).sum();
    let cosine = dot / (na * nb);

    let cost: Vec<Vec<f64>> = a
        .rows()
        .iter()
        .map(|ra| b.rows().iter().map(|rb| euclidean(ra, rb)).collect())
        .collect();
    let dtw = dtw_from_cost(&cost);
    Ok((cosine, dtw))
}

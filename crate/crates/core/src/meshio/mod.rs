//! Triangle-mesh sequences: OBJ ingestion, two-stage normalization into
//! `[-1, 1]^3`, and deterministic persistence.

mod normalize;
mod obj;

pub use normalize::{denormalize_sequence, normalize_sequence, Centering, NormalizationRecord};
pub use obj::{load_sequence, save_sequence};

use crate::error::{Error, Result};

/// One triangle mesh: vertex positions plus triangular faces.
#[derive(Debug, Clone, PartialEq)]
pub struct MeshFrame {
    vertices: Vec<[f64; 3]>,
    faces: Vec<[usize; 3]>,
}

impl MeshFrame {
    pub fn new(vertices: Vec<[f64; 3]>, faces: Vec<[usize; 3]>) -> Result<Self> {
        for (i, f) in faces.iter().enumerate() {
            for &ix in f {
                if ix >= vertices.len() {
                    return Err(Error::InvalidInput(format!(
                        "face {i} references vertex {ix} of {}",
                        vertices.len()
                    )));
                }
            }
            if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                return Err(Error::DegenerateMesh(format!(
                    "face {i} repeats a vertex index: {f:?}"
                )));
            }
        }
        Ok(Self { vertices, faces })
    }

    pub fn vertices(&self) -> &[[f64; 3]] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    pub fn map_vertices(&self, f: impl Fn(&[f64; 3]) -> [f64; 3]) -> MeshFrame {
        MeshFrame {
            vertices: self.vertices.iter().map(f).collect(),
            faces: self.faces.clone(),
        }
    }

    /// Axis-aligned bounding box as (min, max); error when empty.
    pub fn bounding_box(&self) -> Result<([f64; 3], [f64; 3])> {
        if self.vertices.is_empty() {
            return Err(Error::DegenerateMesh("mesh has no vertices".into()));
        }
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for v in &self.vertices {
            for a in 0..3 {
                lo[a] = lo[a].min(v[a]);
                hi[a] = hi[a].max(v[a]);
            }
        }
        Ok((lo, hi))
    }

    pub fn centroid(&self) -> Result<[f64; 3]> {
        if self.vertices.is_empty() {
            return Err(Error::DegenerateMesh("mesh has no vertices".into()));
        }
        let mut c = [0.0; 3];
        for v in &self.vertices {
            for a in 0..3 {
                c[a] += v[a];
            }
        }
        let n = self.vertices.len() as f64;
        Ok([c[0] / n, c[1] / n, c[2] / n])
    }
}

/// Ordered mesh frames with an optional record of how they were normalized.
#[derive(Debug, Clone)]
pub struct MeshSequence {
    frames: Vec<MeshFrame>,
    frame_rate: Option<f64>,
    normalization: Option<NormalizationRecord>,
}

impl MeshSequence {
    pub fn new(frames: Vec<MeshFrame>) -> Result<Self> {
        if frames.is_empty() {
            return Err(Error::InvalidInput("mesh sequence needs >= 1 frame".into()));
        }
        Ok(Self {
            frames,
            frame_rate: None,
            normalization: None,
        })
    }

    pub fn with_frame_rate(mut self, fps: f64) -> Self {
        self.frame_rate = Some(fps);
        self
    }

    pub fn frames(&self) -> &[MeshFrame] {
        &self.frames
    }

    pub fn frame(&self, i: usize) -> &MeshFrame {
        &self.frames[i]
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn frame_rate(&self) -> Option<f64> {
        self.frame_rate
    }

    pub fn normalization(&self) -> Option<&NormalizationRecord> {
        self.normalization.as_ref()
    }

    pub(crate) fn set_normalization(&mut self, record: NormalizationRecord) {
        self.normalization = Some(record);
    }

    pub(crate) fn replace_frames(&self, frames: Vec<MeshFrame>) -> MeshSequence {
        MeshSequence {
            frames,
            frame_rate: self.frame_rate,
            normalization: self.normalization.clone(),
        }
    }
}

//! Two-stage sequence normalization.
//!
//! Stage 1 scales every frame by the rest pose's largest bounding-box
//! extent so the rest pose fits a unit cube. Stage 2 removes each frame's
//! global translation. Stage 3 uniformly scales the whole sequence so the
//! union bounding box spans `[-1, 1]^3` tightly. The record keeps every
//! removed quantity, making the transform invertible.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::{MeshFrame, MeshSequence};

/// How stage 2 defines a frame's center.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum Centering {
    #[default]
    BoundingBox,
    Centroid,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NormalizationRecord {
    /// 1 / max extent of the rest-pose bounding box.
    pub rest_scale: f64,
    /// Per-frame center removed after rest scaling.
    pub frame_offsets: Vec<[f64; 3]>,
    /// Final uniform scale fitting the union box into [-1, 1]^3.
    pub sequence_scale: f64,
    pub centering: Centering,
    pub rest_frame: usize,
}

impl NormalizationRecord {
    /// Forward map applied to an original vertex.
    pub fn apply(&self, frame: usize, v: &[f64; 3]) -> [f64; 3] {
        let o = self.frame_offsets[frame];
        [
            (v[0] * self.rest_scale - o[0]) * self.sequence_scale,
            (v[1] * self.rest_scale - o[1]) * self.sequence_scale,
            (v[2] * self.rest_scale - o[2]) * self.sequence_scale,
        ]
    }

    /// Inverse map back to original coordinates.
    pub fn invert(&self, frame: usize, v: &[f64; 3]) -> [f64; 3] {
        let o = self.frame_offsets[frame];
        [
            (v[0] / self.sequence_scale + o[0]) / self.rest_scale,
            (v[1] / self.sequence_scale + o[1]) / self.rest_scale,
            (v[2] / self.sequence_scale + o[2]) / self.rest_scale,
        ]
    }
}

fn frame_center(frame: &MeshFrame, centering: Centering) -> Result<[f64; 3]> {
    match centering {
        Centering::BoundingBox => {
            let (lo, hi) = frame.bounding_box()?;
            Ok([
                0.5 * (lo[0] + hi[0]),
                0.5 * (lo[1] + hi[1]),
                0.5 * (lo[2] + hi[2]),
            ])
        }
        Centering::Centroid => frame.centroid(),
    }
}

/// Normalize a sequence around the given rest frame. Returns the
/// normalized sequence and the record needed to undo it.
pub fn normalize_sequence(
    seq: &MeshSequence,
    rest_frame: usize,
    centering: Centering,
) -> Result<(MeshSequence, NormalizationRecord)> {
    if rest_frame >= seq.len() {
        return Err(Error::Contract(format!(
            "rest frame {rest_frame} out of range for {} frames",
            seq.len()
        )));
    }
    let (lo, hi) = seq.frame(rest_frame).bounding_box()?;
    let max_extent = (0..3).map(|a| hi[a] - lo[a]).fold(0.0f64, f64::max);
    if max_extent <= 0.0 {
        return Err(Error::DegenerateMesh(
            "rest pose bounding box has zero extent".into(),
        ));
    }
    let rest_scale = 1.0 / max_extent;

    // Stage 1 + 2: scale, then recenter each frame.
    let mut offsets = Vec::with_capacity(seq.len());
    let mut centered: Vec<MeshFrame> = Vec::with_capacity(seq.len());
    for frame in seq.frames() {
        let scaled = frame.map_vertices(|v| [v[0] * rest_scale, v[1] * rest_scale, v[2] * rest_scale]);
        let c = frame_center(&scaled, centering)?;
        offsets.push(c);
        centered.push(scaled.map_vertices(|v| [v[0] - c[0], v[1] - c[1], v[2] - c[2]]));
    }

    // Stage 3: union box over all frames, then one uniform scale.
    let mut half_extent = 0.0f64;
    for frame in &centered {
        let (lo, hi) = frame.bounding_box()?;
        for a in 0..3 {
            half_extent = half_extent.max(lo[a].abs()).max(hi[a].abs());
        }
    }
    if half_extent <= 0.0 {
        return Err(Error::DegenerateMesh(
            "sequence collapses to a point after centering".into(),
        ));
    }
    let sequence_scale = 1.0 / half_extent;

    let frames = centered
        .into_iter()
        .map(|f| {
            f.map_vertices(|v| {
                [
                    v[0] * sequence_scale,
                    v[1] * sequence_scale,
                    v[2] * sequence_scale,
                ]
            })
        })
        .collect();

    let record = NormalizationRecord {
        rest_scale,
        frame_offsets: offsets,
        sequence_scale,
        centering,
        rest_frame,
    };
    let mut out = seq.replace_frames(frames);
    out.set_normalization(record.clone());
    Ok((out, record))
}

/// Undo [`normalize_sequence`] using its record.
pub fn denormalize_sequence(seq: &MeshSequence, record: &NormalizationRecord) -> Result<MeshSequence> {
    if seq.len() != record.frame_offsets.len() {
        return Err(Error::ShapeMismatch(format!(
            "record covers {} frames, sequence has {}",
            record.frame_offsets.len(),
            seq.len()
        )));
    }
    let frames = seq
        .frames()
        .iter()
        .enumerate()
        .map(|(i, f)| f.map_vertices(|v| record.invert(i, v)))
        .collect();
    Ok(seq.replace_frames(frames))
}

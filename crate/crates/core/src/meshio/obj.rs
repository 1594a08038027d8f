//! ASCII OBJ reading and writing for mesh sequences.
//!
//! Only `v` and `f` records matter; face entries may carry `/vt/vn`
//! suffixes, of which only the (1-based) vertex index is kept. Polygons
//! are fan-triangulated. Written files use fixed 6-decimal vertices so
//! output is bit-stable.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

use super::{MeshFrame, MeshSequence};

fn parse_error(file: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        file: file.display().to_string(),
        line,
        message: message.into(),
    }
}

pub fn parse_obj(text: &str, file: &Path) -> Result<MeshFrame> {
    let mut vertices: Vec<[f64; 3]> = Vec::new();
    let mut faces: Vec<[usize; 3]> = Vec::new();

    for (ln, raw) in text.lines().enumerate() {
        let line_no = ln + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut it = line.split_whitespace();
        match it.next() {
            Some("v") => {
                let mut coords = [0.0f64; 3];
                for c in coords.iter_mut() {
                    let tok = it
                        .next()
                        .ok_or_else(|| parse_error(file, line_no, "vertex needs 3 coordinates"))?;
                    *c = tok.parse().map_err(|_| {
                        parse_error(file, line_no, format!("bad vertex coordinate '{tok}'"))
                    })?;
                }
                vertices.push(coords);
            }
            Some("f") => {
                let mut ids = Vec::new();
                for tok in it {
                    let first = tok.split('/').next().unwrap_or("");
                    let idx: i64 = first.parse().map_err(|_| {
                        parse_error(file, line_no, format!("bad face index '{tok}'"))
                    })?;
                    if idx < 1 {
                        return Err(parse_error(
                            file,
                            line_no,
                            format!("face index {idx} is not 1-based"),
                        ));
                    }
                    let zero = (idx - 1) as usize;
                    if zero >= vertices.len() {
                        return Err(parse_error(
                            file,
                            line_no,
                            format!("face index {idx} exceeds {} vertices", vertices.len()),
                        ));
                    }
                    ids.push(zero);
                }
                if ids.len() < 3 {
                    return Err(parse_error(file, line_no, "face needs >= 3 vertices"));
                }
                for i in 1..ids.len() - 1 {
                    faces.push([ids[0], ids[i], ids[i + 1]]);
                }
            }
            // vt / vn / o / g / s / mtllib / usemtl and friends.
            Some(_) => {}
            None => {}
        }
    }

    MeshFrame::new(vertices, faces)
        .map_err(|e| parse_error(file, 0, format!("invalid mesh: {e}")))
}

/// Minimal `*` glob: `prefix*suffix` (a single star) or a literal name.
fn matches_pattern(name: &str, pattern: &str) -> bool {
    match pattern.find('*') {
        Some(pos) => {
            let (prefix, suffix) = (&pattern[..pos], &pattern[pos + 1..]);
            name.len() >= prefix.len() + suffix.len()
                && name.starts_with(prefix)
                && name.ends_with(suffix)
        }
        None => name == pattern,
    }
}

/// Load every mesh file in `dir` matching `pattern` (default `*.obj`),
/// in lexicographic filename order.
pub fn load_sequence(dir: &Path, pattern: &str) -> Result<MeshSequence> {
    let mut names: Vec<String> = Vec::new();
    for entry in fs::read_dir(dir)? {
        let entry = entry?;
        if !entry.file_type()?.is_file() {
            continue;
        }
        let name = entry.file_name().to_string_lossy().into_owned();
        if matches_pattern(&name, pattern) {
            names.push(name);
        }
    }
    if names.is_empty() {
        return Err(Error::InvalidInput(format!(
            "no files matching '{pattern}' in {}",
            dir.display()
        )));
    }
    names.sort();

    let mut frames = Vec::with_capacity(names.len());
    for name in &names {
        let path = dir.join(name);
        let text = fs::read_to_string(&path)?;
        frames.push(parse_obj(&text, &path)?);
    }
    MeshSequence::new(frames)
}

fn frame_name(index: usize, total: usize) -> String {
    let width = total.saturating_sub(1).to_string().len().max(3);
    format!("frame_{index:0width$}.obj")
}

/// Write one OBJ per frame (`frame_000.obj`, ...). Returns the frame count.
pub fn save_sequence(seq: &MeshSequence, dir: &Path) -> Result<usize> {
    for (i, frame) in seq.frames().iter().enumerate() {
        if frame.vertices().is_empty() {
            return Err(Error::DegenerateMesh(format!("frame {i} has no vertices")));
        }
    }
    fs::create_dir_all(dir)?;
    for (i, frame) in seq.frames().iter().enumerate() {
        let path = dir.join(frame_name(i, seq.len()));
        let mut out = String::new();
        for v in frame.vertices() {
            out.push_str(&format!("v {:.6} {:.6} {:.6}\n", v[0], v[1], v[2]));
        }
        for f in frame.faces() {
            out.push_str(&format!("f {} {} {}\n", f[0] + 1, f[1] + 1, f[2] + 1));
        }
        let mut file = fs::File::create(&path)?;
        file.write_all(out.as_bytes())?;
    }
    Ok(seq.len())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_triangle() {
        let mesh = parse_obj(
            "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n",
            Path::new("test.obj"),
        )
        .unwrap();
        assert_eq!(mesh.vertices().len(), 3);
        assert_eq!(mesh.faces(), &[[0, 1, 2]]);
    }

    #[test]
    fn face_suffixes_stripped() {
        let mesh = parse_obj(
            "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1/1/1 2/2/2 3/3/3\n",
            Path::new("test.obj"),
        )
        .unwrap();
        assert_eq!(mesh.faces(), &[[0, 1, 2]]);
    }

    #[test]
    fn quad_fan_triangulated() {
        let mesh = parse_obj(
            "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n",
            Path::new("test.obj"),
        )
        .unwrap();
        assert_eq!(mesh.faces(), &[[0, 1, 2], [0, 2, 3]]);
    }

    #[test]
    fn bad_record_reports_line() {
        let err = parse_obj("v 0 0 0\nv oops 0 0\n", Path::new("bad.obj")).unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn frame_names_zero_padded() {
        assert_eq!(frame_name(0, 3), "frame_000.obj");
        assert_eq!(frame_name(2, 3), "frame_002.obj");
        assert_eq!(frame_name(999, 1500), "frame_0999.obj");
    }

    #[test]
    fn round_trip_preserves_geometry() {
        let dir = tempfile::tempdir().unwrap();
        let verts = vec![
            [0.125, -3.5, 2.0e-3],
            [1.0, 0.0, 0.25],
            [0.0, 1.0, -0.125],
            [0.5, 0.5, 0.5],
        ];
        let frame = MeshFrame::new(verts.clone(), vec![[0, 1, 2], [1, 3, 2]]).unwrap();
        let seq = MeshSequence::new(vec![frame.clone(), frame]).unwrap();
        let written = save_sequence(&seq, dir.path()).unwrap();
        assert_eq!(written, 2);
        let loaded = load_sequence(dir.path(), "*.obj").unwrap();
        assert_eq!(loaded.len(), 2);
        for (a, b) in loaded.frame(0).vertices().iter().zip(&verts) {
            for c in 0..3 {
                assert!((a[c] - b[c]).abs() < 1e-6);
            }
        }
        assert_eq!(loaded.frame(0).faces(), seq.frame(0).faces());
    }

    #[test]
    fn empty_dir_is_input_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            load_sequence(dir.path(), "*.obj"),
            Err(Error::InvalidInput(_))
        ));
    }
}

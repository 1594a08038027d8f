//! Area-weighted barycentric surface sampling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::meshio::MeshFrame;

use super::PointCloud;

/// Draw `n` surface points: triangles proportionally to area, positions by
/// barycentric sampling with weights `(1 - sqrt(r1), sqrt(r1)(1 - r2),
/// sqrt(r1) r2)`. Deterministic for a fixed seed.
pub fn sample_surface(mesh: &MeshFrame, n: usize, seed: u64) -> Result<PointCloud> {
    if n == 0 {
        return Err(Error::InvalidInput("sample count must be >= 1".into()));
    }
    if mesh.faces().is_empty() {
        return Err(Error::DegenerateMesh("mesh has no triangles".into()));
    }
    let verts = mesh.vertices();
    let mut cumulative = Vec::with_capacity(mesh.faces().len());
    let mut total = 0.0f64;
    for f in mesh.faces() {
        let (a, b, c) = (verts[f[0]], verts[f[1]], verts[f[2]]);
        let u = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
        let v = [c[0] - a[0], c[1] - a[1], c[2] - a[2]];
        let cross = [
            u[1] * v[2] - u[2] * v[1],
            u[2] * v[0] - u[0] * v[2],
            u[0] * v[1] - u[1] * v[0],
        ];
        let area = 0.5 * (cross[0] * cross[0] + cross[1] * cross[1] + cross[2] * cross[2]).sqrt();
        total += area;
        cumulative.push(total);
    }
    if total <= 0.0 {
        return Err(Error::DegenerateMesh("all triangles are degenerate".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = Vec::with_capacity(n);
    for _ in 0..n {
        let target: f64 = rng.random::<f64>() * total;
        let tri = cumulative.partition_point(|&c| c < target).min(cumulative.len() - 1);
        let f = mesh.faces()[tri];
        let (a, b, c) = (verts[f[0]], verts[f[1]], verts[f[2]]);
        let r1: f64 = rng.random();
        let r2: f64 = rng.random();
        let s1 = r1.sqrt();
        let (wa, wb, wc) = (1.0 - s1, s1 * (1.0 - r2), s1 * r2);
        points.push([
            wa * a[0] + wb * b[0] + wc * c[0],
            wa * a[1] + wb * b[1] + wc * c[1],
            wa * a[2] + wb * b[2] + wc * c[2],
        ]);
    }
    PointCloud::new(points)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::meshio::MeshFrame;

    fn triangle(scale: f64) -> Vec<[f64; 3]> {
        vec![
            [0.0, 0.0, 0.0],
            [scale, 0.0, 0.0],
            [0.0, scale, 0.0],
        ]
    }

    #[test]
    fn points_stay_inside_single_triangle() {
        let mesh = MeshFrame::new(triangle(2.0), vec![[0, 1, 2]]).unwrap();
        let cloud = sample_surface(&mesh, 500, 1).unwrap();
        for p in cloud.points() {
            // Barycentric coordinates w.r.t. the right triangle in z=0.
            let (wb, wc) = (p[0] / 2.0, p[1] / 2.0);
            let wa = 1.0 - wb - wc;
            assert!(p[2].abs() < 1e-12);
            assert!(wa >= -1e-9 && wb >= -1e-9 && wc >= -1e-9);
            assert!((wa + wb + wc - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn triangle_selection_is_area_weighted() {
        // Two triangles with area ratio 3:1 (legs 2*sqrt(3)... use scaled legs).
        let mut verts = triangle(1.0);
        let s3 = 3.0f64.sqrt();
        verts.extend([
            [10.0, 0.0, 0.0],
            [10.0 + s3, 0.0, 0.0],
            [10.0, s3, 0.0],
        ]);
        let mesh = MeshFrame::new(verts, vec![[0, 1, 2], [3, 4, 5]]).unwrap();
        let n = 40_000;
        let cloud = sample_surface(&mesh, n, 9).unwrap();
        let big = cloud.points().iter().filter(|p| p[0] >= 5.0).count();
        let frac = big as f64 / n as f64;
        assert!((frac - 0.75).abs() < 0.02, "big-triangle fraction {frac}");
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let mesh = MeshFrame::new(triangle(1.0), vec![[0, 1, 2]]).unwrap();
        let a = sample_surface(&mesh, 64, 123).unwrap();
        let b = sample_surface(&mesh, 64, 123).unwrap();
        assert_eq!(a.points(), b.points());
    }

    #[test]
    fn degenerate_mesh_rejected() {
        let verts = vec![[0.0; 3], [1.0, 0.0, 0.0], [2.0, 0.0, 0.0]];
        let mesh = MeshFrame::new(verts, vec![[0, 1, 2]]).unwrap();
        assert!(matches!(
            sample_surface(&mesh, 10, 0),
            Err(Error::DegenerateMesh(_))
        ));
    }
}

//! Area-weighted surface point sampling.

use super::Mesh;
use crate::error::{Error, Result};
use crate::rng::Rng;

/// Samples `n` points uniformly over the mesh surface (area-weighted over
/// triangles, uniform barycentric within each). Deterministic given `rng`.
pub fn sample_surface_points(mesh: &Mesh, n: usize, rng: &mut Rng) -> Result<Vec<[f32; 3]>> {
    if n == 0 {
        return Ok(Vec::new());
    }
    if mesh.is_empty() {
        return Err(Error::invalid("cannot sample points from an empty mesh"));
    }
    let mut cumulative = Vec::with_capacity(mesh.triangles.len());
    let mut total = 0f64;
    for t in 0..mesh.triangles.len() {
        total += mesh.triangle_area(t);
        cumulative.push(total);
    }
    if total <= 0.0 {
        return Err(Error::invalid("mesh has zero surface area"));
    }
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let r = rng.next_f64() * total;
        let t = cumulative.partition_point(|&c| c < r).min(mesh.triangles.len() - 1);
        let [ia, ib, ic] = mesh.triangles[t];
        let (a, b, c) = (
            mesh.vertices[ia as usize],
            mesh.vertices[ib as usize],
            mesh.vertices[ic as usize],
        );
        // sqrt trick for uniform barycentric coordinates
        let su = rng.next_f64().sqrt();
        let v = rng.next_f64();
        let (wa, wb, wc) = (1.0 - su, su * (1.0 - v), su * v);
        out.push([
            (wa * a[0] as f64 + wb * b[0] as f64 + wc * c[0] as f64) as f32,
            (wa * a[1] as f64 + wb * b[1] as f64 + wc * c[1] as f64) as f32,
            (wa * a[2] as f64 + wb * b[2] as f64 + wc * c[2] as f64) as f32,
        ]);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn samples_stay_in_triangle_plane() {
        let mesh = Mesh {
            vertices: vec![[0.0, 0.0, 1.5], [4.0, 0.0, 1.5], [0.0, 3.0, 1.5]],
            triangles: vec![[0, 1, 2]],
        };
        let mut rng = Rng::new(4);
        let pts = sample_surface_points(&mesh, 500, &mut rng).unwrap();
        for p in pts {
            assert!((p[2] - 1.5).abs() < 1e-6);
            // inside the triangle: x/4 + y/3 <= 1 with small slack
            assert!(p[0] >= -1e-6 && p[1] >= -1e-6);
            assert!(p[0] as f64 / 4.0 + p[1] as f64 / 3.0 <= 1.0 + 1e-6);
        }
    }

    #[test]
    fn zero_count_is_empty_even_for_empty_mesh() {
        let mut rng = Rng::new(4);
        assert!(sample_surface_points(&Mesh::default(), 0, &mut rng).unwrap().is_empty());
    }

    #[test]
    fn empty_mesh_with_positive_count_errors() {
        let mut rng = Rng::new(4);
        assert!(sample_surface_points(&Mesh::default(), 5, &mut rng).is_err());
    }

    #[test]
    fn unit_square_sample_mean_near_centroid() {
        let mesh = Mesh {
            vertices: vec![
                [0.0, 0.0, 0.0],
                [1.0, 0.0, 0.0],
                [1.0, 1.0, 0.0],
                [0.0, 1.0, 0.0],
            ],
            triangles: vec![[0, 1, 2], [0, 2, 3]],
        };
        let mut rng = Rng::new(8);
        let pts = sample_surface_points(&mesh, 100_000, &mut rng).unwrap();
        let (mut mx, mut my) = (0.0f64, 0.0f64);
        for p in &pts {
            mx += p[0] as f64;
            my += p[1] as f64;
        }
        mx /= pts.len() as f64;
        my /= pts.len() as f64;
        assert!((mx - 0.5).abs() < 0.01, "mean x {mx}");
        assert!((my - 0.5).abs() < 0.01, "mean y {my}");
    }

    #[test]
    fn deterministic_given_seed() {
        let mesh = super::super::primitives::uv_sphere([0.0; 3], 1.0, 12, 6);
        let a = sample_surface_points(&mesh, 64, &mut Rng::new(123)).unwrap();
        let b = sample_surface_points(&mesh, 64, &mut Rng::new(123)).unwrap();
        assert_eq!(a, b);
    }
}

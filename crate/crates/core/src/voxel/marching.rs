//! Marching cubes isosurface extraction (standard 256-case tables, linear
//! edge interpolation, vertices welded on shared cell edges).

use std::collections::HashMap;

use super::tables::{EDGE_TABLE, TRIANGLE_TABLE};
use super::{Mesh, OccupancyGrid};
use crate::error::{Error, Result};

/// Scalar field sampled on a regular lattice, x-major then y then z.
#[derive(Clone, Debug)]
pub struct ScalarVolume {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    pub data: Vec<f32>,
}

impl ScalarVolume {
    pub fn new(nx: usize, ny: usize, nz: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != nx * ny * nz {
            return Err(Error::shape(format!(
                "volume {nx}x{ny}x{nz} wants {} values, got {}",
                nx * ny * nz,
                data.len()
            )));
        }
        Ok(ScalarVolume { nx, ny, nz, data })
    }

    #[inline]
    pub fn value(&self, x: usize, y: usize, z: usize) -> f32 {
        self.data[(x * self.ny + y) * self.nz + z]
    }
}

// Cube corner offsets (x, y, z); 0..3 ring the bottom y face, 4..7 the top.
const CORNERS: [(usize, usize, usize); 8] = [
    (0, 0, 0),
    (1, 0, 0),
    (1, 0, 1),
    (0, 0, 1),
    (0, 1, 0),
    (1, 1, 0),
    (1, 1, 1),
    (0, 1, 1),
];

const EDGE_ENDS: [(usize, usize); 12] = [
    (0, 1),
    (1, 2),
    (2, 3),
    (3, 0),
    (4, 5),
    (5, 6),
    (6, 7),
    (7, 4),
    (0, 4),
    (1, 5),
    (2, 6),
    (3, 7),
];

/// Global edge key: (axis, x, y, z) of the edge's lower lattice point.
/// Axis 0 = x, 1 = y, 2 = z.
fn edge_key(edge: usize, x: usize, y: usize, z: usize) -> (u8, usize, usize, usize) {
    match edge {
        0 => (0, x, y, z),
        1 => (2, x + 1, y, z),
        2 => (0, x, y, z + 1),
        3 => (2, x, y, z),
        4 => (0, x, y + 1, z),
        5 => (2, x + 1, y + 1, z),
        6 => (0, x, y + 1, z + 1),
        7 => (2, x, y + 1, z),
        8 => (1, x, y, z),
        9 => (1, x + 1, y, z),
        10 => (1, x + 1, y, z + 1),
        11 => (1, x, y, z + 1),
        _ => unreachable!(),
    }
}

/// Standard marching cubes at the given iso level. Vertices sit on cell
/// edges by linear interpolation, in lattice coordinates. Triangles wind
/// counter-clockwise seen from the value >= level side (outward normals for
/// solids encoded as high values).
pub fn marching_cubes(field: &ScalarVolume, level: f32) -> Result<Mesh> {
    if field.data.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("marching cubes needs finite field values"));
    }
    if field.nx < 2 || field.ny < 2 || field.nz < 2 {
        return Ok(Mesh::default());
    }
    // Samples exactly at the level are nudged below it so that interpolated
    // vertices never coincide with lattice points (keeps welding sound).
    let sample = |v: f32| if v == level { level - 1e-6 * level.abs().max(1.0) } else { v };

    let mut mesh = Mesh::default();
    let mut edge_vertices: HashMap<(u8, usize, usize, usize), u32> = HashMap::new();

    for x in 0..field.nx - 1 {
        for y in 0..field.ny - 1 {
            for z in 0..field.nz - 1 {
                let mut values = [0f32; 8];
                let mut cube_index = 0usize;
                for (i, &(dx, dy, dz)) in CORNERS.iter().enumerate() {
                    let v = sample(field.value(x + dx, y + dy, z + dz));
                    values[i] = v;
                    if v < level {
                        cube_index |= 1 << i;
                    }
                }
                if EDGE_TABLE[cube_index] == 0 {
                    continue;
                }
                let mut cell_edge_vertex = [u32::MAX; 12];
                for (edge, &(a, b)) in EDGE_ENDS.iter().enumerate() {
                    if EDGE_TABLE[cube_index] & (1 << edge) == 0 {
                        continue;
                    }
                    let key = edge_key(edge, x, y, z);
                    let idx = *edge_vertices.entry(key).or_insert_with(|| {
                        let (va, vb) = (values[a], values[b]);
                        let t = (level - va) / (vb - va);
                        let pa = CORNERS[a];
                        let pb = CORNERS[b];
                        let p = [
                            (x + pa.0) as f32 + t * (pb.0 as f32 - pa.0 as f32),
                            (y + pa.1) as f32 + t * (pb.1 as f32 - pa.1 as f32),
                            (z + pa.2) as f32 + t * (pb.2 as f32 - pa.2 as f32),
                        ];
                        mesh.vertices.push(p);
                        (mesh.vertices.len() - 1) as u32
                    });
                    cell_edge_vertex[edge] = idx;
                }
                let tri = &TRIANGLE_TABLE[cube_index];
                let mut i = 0;
                while i < 16 && tri[i] >= 0 {
                    let a = cell_edge_vertex[tri[i] as usize];
                    let b = cell_edge_vertex[tri[i + 1] as usize];
                    let c = cell_edge_vertex[tri[i + 2] as usize];
                    debug_assert!(a != u32::MAX && b != u32::MAX && c != u32::MAX);
                    // Table order winds inward under this corner layout;
                    // swap so normals leave the high-value region.
                    mesh.triangles.push([a, c, b]);
                    i += 3;
                }
            }
        }
    }
    Ok(mesh)
}

/// Extracts the boundary surface of an occupancy grid: voxel centers become
/// lattice points, the volume is padded by one empty layer so meshes close
/// at grid borders, and the output is shifted back into grid coordinates.
pub fn occupancy_mesh(grid: &OccupancyGrid) -> Result<Mesh> {
    let (nx, ny, nz) = grid.dims();
    let (px, py, pz) = (nx + 2, ny + 2, nz + 2);
    let mut data = vec![0f32; px * py * pz];
    for x in 0..nx {
        for y in 0..ny {
            for z in 0..nz {
                if grid.get(x, y, z) {
                    data[((x + 1) * py + (y + 1)) * pz + (z + 1)] = 1.0;
                }
            }
        }
    }
    let field = ScalarVolume::new(px, py, pz, data)?;
    let mut mesh = marching_cubes(&field, 0.5)?;
    for v in &mut mesh.vertices {
        v[0] -= 1.0;
        v[1] -= 1.0;
        v[2] -= 1.0;
    }
    Ok(mesh)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_zero_field_yields_empty_mesh() {
        let field = ScalarVolume::new(4, 4, 4, vec![0.0; 64]).unwrap();
        let mesh = marching_cubes(&field, 0.5).unwrap();
        assert!(mesh.is_empty());
    }

    #[test]
    fn single_voxel_is_closed_manifold_with_euler_two() {
        let mut grid = OccupancyGrid::new(1, 1, 1).unwrap();
        grid.set(0, 0, 0, true);
        let mesh = occupancy_mesh(&grid).unwrap();
        assert_eq!(mesh.triangles.len(), 8, "octahedron expected");
        assert!(mesh.is_watertight(), "single voxel mesh not watertight");
        assert_eq!(mesh.euler_characteristic(), 2);
        assert!(mesh.signed_volume() > 0.0, "orientation should be outward");
        for t in 0..mesh.triangles.len() {
            assert!(mesh.triangle_area(t) > 1e-9, "degenerate triangle");
        }
    }

    #[test]
    fn half_space_area_matches_plane() {
        // Field of 1 below y = k, 0 at and above; with no padding the only
        // crossings are the single horizontal plane spanning the cell extent.
        let (nx, ny, nz) = (129usize, 8usize, 129usize);
        let k = 4;
        let mut data = vec![0f32; nx * ny * nz];
        for x in 0..nx {
            for y in 0..k {
                for z in 0..nz {
                    data[(x * ny + y) * nz + z] = 1.0;
                }
            }
        }
        let field = ScalarVolume::new(nx, ny, nz, data).unwrap();
        let mesh = marching_cubes(&field, 0.5).unwrap();
        let want = ((nx - 1) * (nz - 1)) as f64;
        let got = mesh.area();
        assert!(
            (got - want).abs() / (nx * nz) as f64 <= 0.02,
            "area {got} vs plane {want} of {}",
            nx * nz
        );
        // all vertices at the interpolated midplane
        for v in &mesh.vertices {
            assert!((v[1] - (k as f32 - 0.5)).abs() < 1e-6);
        }
    }

    #[test]
    fn sphere_distance_field_area_and_watertightness() {
        // Smooth field: distance from center, extracted at the radius.
        let n = 33usize;
        let c = (n as f32 - 1.0) / 2.0;
        let r = 12.0f32;
        let mut data = vec![0f32; n * n * n];
        for x in 0..n {
            for y in 0..n {
                for z in 0..n {
                    let d = ((x as f32 - c).powi(2) + (y as f32 - c).powi(2) + (z as f32 - c).powi(2)).sqrt();
                    // inside high, outside low, so normals point out of the ball
                    data[(x * n + y) * n + z] = r - d;
                }
            }
        }
        let field = ScalarVolume::new(n, n, n, data).unwrap();
        let mesh = marching_cubes(&field, 0.0).unwrap();
        assert!(mesh.is_watertight());
        let want = 4.0 * std::f64::consts::PI * (r as f64) * (r as f64);
        let got = mesh.area();
        assert!((got - want).abs() / want < 0.05, "sphere area {got} vs {want}");
        let vol = mesh.signed_volume();
        let want_vol = 4.0 / 3.0 * std::f64::consts::PI * (r as f64).powi(3);
        assert!((vol - want_vol).abs() / want_vol < 0.05, "sphere volume {vol} vs {want_vol}");
    }

    #[test]
    fn boolean_occupancy_watertight_when_interior() {
        let mut rng = crate::rng::Rng::new(31);
        for _ in 0..10 {
            let mut grid = OccupancyGrid::new(8, 8, 8).unwrap();
            for x in 1..7 {
                for y in 1..7 {
                    for z in 1..7 {
                        grid.set(x, y, z, rng.next_f64() < 0.5);
                    }
                }
            }
            let mesh = occupancy_mesh(&grid).unwrap();
            if !mesh.is_empty() {
                assert!(mesh.is_watertight());
                for t in 0..mesh.triangles.len() {
                    assert!(mesh.triangle_area(t) > 1e-9, "degenerate triangle emitted");
                }
            }
        }
    }
}

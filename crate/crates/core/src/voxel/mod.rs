//! Occupancy-grid construction and mesh extraction: voxelization, flood
//! fill, ground fixing, marching cubes, surface point sampling.
//!
//! All operations here are pure functions over immutable inputs and safe to
//! call from multiple threads.

mod flood;
mod marching;
pub mod nuiv;
pub mod obj;
mod primitives;
mod surface;
mod tables;
pub mod voxelize;

pub use flood::{detect_ground_level, fix_ground, flood_fill_solid, GROUND_THICKNESS};
pub use marching::{marching_cubes, occupancy_mesh, ScalarVolume};
pub use primitives::{box_mesh, uv_sphere};
pub use surface::sample_surface_points;
pub use voxelize::{voxelize_in_frame, voxelize_mesh, VoxelFrame};

use crate::error::{Error, Result};

/// Dense boolean voxel volume; the canonical scene representation.
/// Layout is x-major, then y, then z; y is the height axis.
#[derive(Clone, Debug, PartialEq)]
pub struct OccupancyGrid {
    nx: usize,
    ny: usize,
    nz: usize,
    bits: Vec<u64>,
}

impl OccupancyGrid {
    pub fn new(nx: usize, ny: usize, nz: usize) -> Result<Self> {
        if nx == 0 || ny == 0 || nz == 0 {
            return Err(Error::invalid(format!("grid dims must be positive, got {nx}x{ny}x{nz}")));
        }
        let n = nx
            .checked_mul(ny)
            .and_then(|v| v.checked_mul(nz))
            .ok_or_else(|| Error::invalid("grid dims overflow"))?;
        Ok(OccupancyGrid { nx, ny, nz, bits: vec![0; n.div_ceil(64)] })
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.nx, self.ny, self.nz)
    }

    pub fn voxel_count(&self) -> usize {
        self.nx * self.ny * self.nz
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        debug_assert!(x < self.nx && y < self.ny && z < self.nz);
        (x * self.ny + y) * self.nz + z
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> bool {
        let i = self.index(x, y, z);
        (self.bits[i >> 6] >> (i & 63)) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, z: usize, value: bool) {
        let i = self.index(x, y, z);
        if value {
            self.bits[i >> 6] |= 1 << (i & 63);
        } else {
            self.bits[i >> 6] &= !(1 << (i & 63));
        }
    }

    #[inline]
    pub fn get_linear(&self, i: usize) -> bool {
        (self.bits[i >> 6] >> (i & 63)) & 1 == 1
    }

    #[inline]
    pub fn set_linear(&mut self, i: usize, value: bool) {
        if value {
            self.bits[i >> 6] |= 1 << (i & 63);
        } else {
            self.bits[i >> 6] &= !(1 << (i & 63));
        }
    }

    pub fn occupied_count(&self) -> usize {
        // Trailing bits of the last block are never set.
        self.bits.iter().map(|b| b.count_ones() as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.iter().all(|&b| b == 0)
    }

    /// Bit-packed occupancy, LSB-first within each byte, in index order.
    pub fn packed_bytes(&self) -> Vec<u8> {
        let nbytes = self.voxel_count().div_ceil(8);
        let mut out = vec![0u8; nbytes];
        for (block_idx, &block) in self.bits.iter().enumerate() {
            let le = block.to_le_bytes();
            let start = block_idx * 8;
            let take = (nbytes - start).min(8);
            out[start..start + take].copy_from_slice(&le[..take]);
        }
        out
    }

    pub fn from_packed_bytes(nx: usize, ny: usize, nz: usize, bytes: &[u8]) -> Result<Self> {
        let mut grid = OccupancyGrid::new(nx, ny, nz)?;
        let expect = grid.voxel_count().div_ceil(8);
        if bytes.len() != expect {
            return Err(Error::format(format!(
                "packed occupancy needs {expect} bytes, got {}",
                bytes.len()
            )));
        }
        for (block_idx, block) in grid.bits.iter_mut().enumerate() {
            let start = block_idx * 8;
            let take = (bytes.len() - start).min(8);
            let mut le = [0u8; 8];
            le[..take].copy_from_slice(&bytes[start..start + take]);
            *block = u64::from_le_bytes(le);
        }
        // Clear any slack bits beyond voxel_count so equality stays bitwise.
        let n = grid.voxel_count();
        if n % 64 != 0 {
            let mask = (1u64 << (n % 64)) - 1;
            let last = grid.bits.len() - 1;
            grid.bits[last] &= mask;
        }
        Ok(grid)
    }

    /// Intersection-over-union of occupied sets (1.0 when both empty).
    pub fn iou(&self, other: &OccupancyGrid) -> f64 {
        assert_eq!(self.dims(), other.dims(), "iou needs matching dims");
        let mut inter = 0usize;
        let mut union = 0usize;
        for (a, b) in self.bits.iter().zip(&other.bits) {
            inter += (a & b).count_ones() as usize;
            union += (a | b).count_ones() as usize;
        }
        if union == 0 {
            1.0
        } else {
            inter as f64 / union as f64
        }
    }
}

/// Triangle mesh in voxel units.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Mesh {
    pub vertices: Vec<[f32; 3]>,
    pub triangles: Vec<[u32; 3]>,
}

impl Mesh {
    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.vertices.len() as u32;
        for t in &self.triangles {
            if t.iter().any(|&i| i >= n) {
                return Err(Error::invalid(format!("triangle index out of range: {t:?}")));
            }
        }
        Ok(())
    }

    pub fn bbox(&self) -> Option<([f32; 3], [f32; 3])> {
        if self.vertices.is_empty() {
            return None;
        }
        let mut lo = [f32::INFINITY; 3];
        let mut hi = [f32::NEG_INFINITY; 3];
        for v in &self.vertices {
            for a in 0..3 {
                lo[a] = lo[a].min(v[a]);
                hi[a] = hi[a].max(v[a]);
            }
        }
        Some((lo, hi))
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t];
        let (a, b, c) = (self.vertices[a as usize], self.vertices[b as usize], self.vertices[c as usize]);
        let u = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
        let v = [c[0] - a[0], c[1] - a[1], c[2] - a[2]];
        let cx = (u[1] as f64) * (v[2] as f64) - (u[2] as f64) * (v[1] as f64);
        let cy = (u[2] as f64) * (v[0] as f64) - (u[0] as f64) * (v[2] as f64);
        let cz = (u[0] as f64) * (v[1] as f64) - (u[1] as f64) * (v[0] as f64);
        0.5 * (cx * cx + cy * cy + cz * cz).sqrt()
    }

    pub fn area(&self) -> f64 {
        (0..self.triangles.len()).map(|t| self.triangle_area(t)).sum()
    }

    /// Signed volume via the divergence theorem; positive when triangles
    /// wind counter-clockwise seen from outside (outward orientation).
    pub fn signed_volume(&self) -> f64 {
        let mut vol = 0.0;
        for &[a, b, c] in &self.triangles {
            let (a, b, c) = (self.vertices[a as usize], self.vertices[b as usize], self.vertices[c as usize]);
            let det = (a[0] as f64) * ((b[1] as f64) * (c[2] as f64) - (b[2] as f64) * (c[1] as f64))
                - (a[1] as f64) * ((b[0] as f64) * (c[2] as f64) - (b[2] as f64) * (c[0] as f64))
                + (a[2] as f64) * ((b[0] as f64) * (c[1] as f64) - (b[1] as f64) * (c[0] as f64));
            vol += det / 6.0;
        }
        vol
    }

    /// True iff every directed edge appears exactly once and its reverse
    /// exists: closed and consistently oriented.
    pub fn is_watertight(&self) -> bool {
        use std::collections::HashMap;
        let mut directed: HashMap<(u32, u32), u32> = HashMap::new();
        for &[a, b, c] in &self.triangles {
            for (u, v) in [(a, b), (b, c), (c, a)] {
                *directed.entry((u, v)).or_insert(0) += 1;
            }
        }
        directed.iter().all(|(&(u, v), &count)| count == 1 && directed.get(&(v, u)) == Some(&1))
    }

    /// V - E + F with E counted over unique undirected edges.
    pub fn euler_characteristic(&self) -> i64 {
        use std::collections::HashSet;
        let mut used: HashSet<u32> = HashSet::new();
        let mut edges: HashSet<(u32, u32)> = HashSet::new();
        for &[a, b, c] in &self.triangles {
            used.extend([a, b, c]);
            for (u, v) in [(a, b), (b, c), (c, a)] {
                edges.insert((u.min(v), u.max(v)));
            }
        }
        used.len() as i64 - edges.len() as i64 + self.triangles.len() as i64
    }
}

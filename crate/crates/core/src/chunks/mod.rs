//! Quad-chunk sampling: sample maps over a scene, farthest point sampling
//! of quad origins, chunk extraction, and normalized training queries.

pub mod dataset;

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::voxel::OccupancyGrid;

pub const DEPTH_DEV_THRESHOLD: f64 = 2.5;

/// Per-column maps plus the valid-origin mask for a kernel-sized window.
/// The window is anchored at its top-left corner: `valid[(x, z)]` speaks for
/// the window `[x, x+kernel) x [z, z+kernel)`.
#[derive(Clone, Debug)]
pub struct SampleMaps {
    pub nx: usize,
    pub nz: usize,
    pub kernel: usize,
    /// Any occupancy in the column.
    pub alpha: Vec<bool>,
    /// Top-down height: tallest occupied voxel index + 1, 0 when empty.
    pub heightmap: Vec<u32>,
    pub valid: Vec<bool>,
    /// |mean window height - column height| where the window fits, else 0.
    pub depth_dev: Vec<f64>,
}

impl SampleMaps {
    #[inline]
    pub fn idx(&self, x: usize, z: usize) -> usize {
        x * self.nz + z
    }

    pub fn valid_origins(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for x in 0..self.nx {
            for z in 0..self.nz {
                if self.valid[self.idx(x, z)] {
                    out.push((x, z));
                }
            }
        }
        out
    }
}

/// Computes alpha/height/validity maps. A window is valid when every column
/// in it is occupied (alpha sum equals kernel^2) and the anchor column's
/// depth deviation reaches `depth_threshold`.
pub fn compute_sample_maps(
    grid: &OccupancyGrid,
    kernel: usize,
    depth_threshold: f64,
) -> Result<SampleMaps> {
    let (nx, ny, nz) = grid.dims();
    if nx < kernel || nz < kernel {
        return Err(Error::invalid(format!(
            "scene {nx}x{nz} smaller than kernel {kernel}"
        )));
    }
    let mut alpha = vec![false; nx * nz];
    let mut heightmap = vec![0u32; nx * nz];
    for x in 0..nx {
        for z in 0..nz {
            for y in (0..ny).rev() {
                if grid.get(x, y, z) {
                    alpha[x * nz + z] = true;
                    heightmap[x * nz + z] = y as u32 + 1;
                    break;
                }
            }
        }
    }

    // Summed-area tables; entry (x, z) covers the prefix [0, x) x [0, z).
    let w = nz + 1;
    let mut alpha_sat = vec![0u64; (nx + 1) * w];
    let mut height_sat = vec![0f64; (nx + 1) * w];
    for x in 0..nx {
        for z in 0..nz {
            let i = x * nz + z;
            let a = u64::from(alpha[i]);
            let h = heightmap[i] as f64;
            alpha_sat[(x + 1) * w + z + 1] =
                a + alpha_sat[x * w + z + 1] + alpha_sat[(x + 1) * w + z] - alpha_sat[x * w + z];
            height_sat[(x + 1) * w + z + 1] =
                h + height_sat[x * w + z + 1] + height_sat[(x + 1) * w + z] - height_sat[x * w + z];
        }
    }
    let window_sum = |sat: &[f64], x: usize, z: usize| {
        sat[(x + kernel) * w + z + kernel] - sat[x * w + z + kernel] - sat[(x + kernel) * w + z]
            + sat[x * w + z]
    };
    let window_sum_u = |sat: &[u64], x: usize, z: usize| {
        sat[(x + kernel) * w + z + kernel] + sat[x * w + z]
            - sat[x * w + z + kernel]
            - sat[(x + kernel) * w + z]
    };

    let mut valid = vec![false; nx * nz];
    let mut depth_dev = vec![0f64; nx * nz];
    let full = (kernel * kernel) as u64;
    for x in 0..=nx - kernel {
        for z in 0..=nz - kernel {
            let i = x * nz + z;
            let asum = window_sum_u(&alpha_sat, x, z);
            let hmean = window_sum(&height_sat, x, z) / full as f64;
            let dev = (hmean - heightmap[i] as f64).abs();
            depth_dev[i] = dev;
            valid[i] = asum == full && dev >= depth_threshold;
        }
    }
    Ok(SampleMaps { nx, nz, kernel, alpha, heightmap, valid, depth_dev })
}

/// Greedy farthest point sampling over 2D positions: starting from `start`,
/// repeatedly picks the candidate maximizing its distance to the selected
/// set. Ties break toward the lowest index.
pub fn farthest_point_sampling(candidates: &[[f64; 2]], k: usize, start: usize) -> Result<Vec<usize>> {
    let m = candidates.len();
    if k > m {
        return Err(Error::invalid(format!("cannot select {k} of {m} candidates")));
    }
    if k == 0 {
        return Ok(Vec::new());
    }
    if start >= m {
        return Err(Error::bounds(format!("start index {start} >= {m}")));
    }
    let mut selected = Vec::with_capacity(k);
    let mut taken = vec![false; m];
    let mut min_d2 = vec![f64::INFINITY; m];
    let mut current = start;
    selected.push(current);
    taken[current] = true;
    for _ in 1..k {
        let c = candidates[current];
        let mut best = usize::MAX;
        let mut best_d2 = f64::NEG_INFINITY;
        for (i, p) in candidates.iter().enumerate() {
            let dx = p[0] - c[0];
            let dz = p[1] - c[1];
            let d2 = dx * dx + dz * dz;
            if d2 < min_d2[i] {
                min_d2[i] = d2;
            }
            // strict > keeps the lowest index on ties
            if !taken[i] && min_d2[i] > best_d2 {
                best = i;
                best_d2 = min_d2[i];
            }
        }
        selected.push(best);
        taken[best] = true;
        current = best;
    }
    Ok(selected)
}

/// One (chunk, h, chunk) occupancy sub-volume centered at scene coordinates
/// `origin`, truncated at its own tallest occupied voxel.
#[derive(Clone, Debug, PartialEq)]
pub struct ChunkSample {
    /// Scene coordinates of the chunk center along (x, z).
    pub origin: (usize, usize),
    pub chunk_size: usize,
    /// Height in voxels of the tallest occupied voxel (0 for empty chunks).
    pub h_vox: usize,
    /// Occupancy of shape (chunk, max(h_vox, 1), chunk).
    pub occ: OccupancyGrid,
}

/// 2x2 grouping of chunks covering a (2*chunk, h, 2*chunk) footprint.
/// Slot order: z0 top-left, z1 top-right, z2 bottom-left, z3 bottom-right,
/// where "top/bottom" indexes x and "left/right" indexes z.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadChunk {
    /// Scene coordinates of the quad center along (x, z).
    pub origin: (usize, usize),
    pub chunk_size: usize,
    /// Tallest occupied voxel over the whole quad footprint.
    pub h_vox: usize,
    pub chunks: [ChunkSample; 4],
}

/// Extracts the quad window `occ[i-c .. i+c, :, k-c .. k+c]` (c = chunk
/// size) split into four chunks with independently computed heights.
pub fn extract_quad_chunk(
    grid: &OccupancyGrid,
    i: usize,
    k: usize,
    chunk_size: usize,
) -> Result<QuadChunk> {
    let (nx, ny, nz) = grid.dims();
    let c = chunk_size;
    if i < c || k < c || i + c > nx || k + c > nz {
        return Err(Error::bounds(format!(
            "quad window centered at ({i}, {k}) with chunk {c} exceeds scene {nx}x{nz}"
        )));
    }
    let x0 = i - c;
    let z0 = k - c;
    let mut quad_h = 0usize;
    // slot order: (dx, dz) in { (0,0), (0,1), (1,0), (1,1) }
    let mut chunks: Vec<ChunkSample> = Vec::with_capacity(4);
    for (dx, dz) in [(0usize, 0usize), (0, 1), (1, 0), (1, 1)] {
        let cx0 = x0 + dx * c;
        let cz0 = z0 + dz * c;
        let mut h = 0usize;
        for x in cx0..cx0 + c {
            for z in cz0..cz0 + c {
                for y in (h..ny).rev() {
                    if grid.get(x, y, z) {
                        h = h.max(y + 1);
                        break;
                    }
                }
            }
        }
        let mut occ = OccupancyGrid::new(c, h.max(1), c)?;
        for x in 0..c {
            for y in 0..h {
                for z in 0..c {
                    if grid.get(cx0 + x, y, cz0 + z) {
                        occ.set(x, y, z, true);
                    }
                }
            }
        }
        quad_h = quad_h.max(h);
        chunks.push(ChunkSample {
            origin: (cx0 + c / 2, cz0 + c / 2),
            chunk_size: c,
            h_vox: h,
            occ,
        });
    }
    let chunks: [ChunkSample; 4] = chunks.try_into().unwrap();
    Ok(QuadChunk { origin: (i, k), chunk_size: c, h_vox: quad_h, chunks })
}

/// r = 2 * (r_vox / d) - 1, componentwise. No clamping: values outside
/// [-1, 1] are legal for the vector-set path.
pub fn normalize_coords(coords: &[[f64; 3]], d: [f64; 3]) -> Result<Vec<[f64; 3]>> {
    if d.iter().any(|&x| x <= 0.0) {
        return Err(Error::invalid(format!("normalization scale must be positive, got {d:?}")));
    }
    Ok(coords
        .iter()
        .map(|r| [2.0 * r[0] / d[0] - 1.0, 2.0 * r[1] / d[1] - 1.0, 2.0 * r[2] / d[2] - 1.0])
        .collect())
}

/// h_tilde = 2 * (h_vox / chunk) - 1.
pub fn chunk_height_target(h_vox: usize, chunk_size: usize) -> f64 {
    2.0 * h_vox as f64 / chunk_size as f64 - 1.0
}

/// Inverse of the height target, rounded onto the voxel lattice and clamped
/// to at least one layer.
pub fn denormalize_height(h_norm: f64, chunk_size: usize, max_height: usize) -> usize {
    let h = (chunk_size as f64 * (h_norm + 1.0) / 2.0).round();
    (h.max(1.0) as usize).min(max_height)
}

/// Occupancy queries for one chunk: voxel coordinates, their normalized
/// counterparts (d = chunk size on all axes), and ground-truth labels.
#[derive(Clone, Debug)]
pub struct QueryBatch {
    pub coords_vox: Vec<[f64; 3]>,
    pub coords_norm: Vec<[f64; 3]>,
    pub labels: Vec<bool>,
}

impl QueryBatch {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Occupancy lookup for continuous chunk coordinates: floor onto the voxel
/// lattice, outside the stored volume is empty.
pub fn chunk_occupancy_at(chunk: &ChunkSample, p: [f64; 3]) -> bool {
    let c = chunk.chunk_size as f64;
    if p[0] < 0.0 || p[0] >= c || p[2] < 0.0 || p[2] >= c || p[1] < 0.0 {
        return false;
    }
    let (x, y, z) = (p[0] as usize, p[1] as usize, p[2] as usize);
    if y >= chunk.h_vox {
        return false;
    }
    chunk.occ.get(x, y, z)
}

/// An exposed unit face of an occupied voxel: its center in chunk
/// coordinates and its outward normal (axis index and sign).
#[derive(Clone, Copy, Debug)]
pub struct Face {
    pub center: [f64; 3],
    pub axis: usize,
    pub sign: f64,
}

/// Exposed unit faces of occupied voxels (any of the 6 neighbors empty or
/// outside).
pub fn exposed_faces(chunk: &ChunkSample) -> Vec<Face> {
    let c = chunk.chunk_size;
    let h = chunk.h_vox;
    let mut faces = Vec::new();
    let occupied = |x: i64, y: i64, z: i64| -> bool {
        if x < 0 || z < 0 || y < 0 || x >= c as i64 || z >= c as i64 || y >= h as i64 {
            return false;
        }
        chunk.occ.get(x as usize, y as usize, z as usize)
    };
    for x in 0..c as i64 {
        for y in 0..h as i64 {
            for z in 0..c as i64 {
                if !occupied(x, y, z) {
                    continue;
                }
                let center = (x as f64 + 0.5, y as f64 + 0.5, z as f64 + 0.5);
                for (axis, (dx, dy, dz)) in
                    [(0usize, (1i64, 0i64, 0i64)), (0, (-1, 0, 0)), (1, (0, 1, 0)), (1, (0, -1, 0)), (2, (0, 0, 1)), (2, (0, 0, -1))]
                {
                    if !occupied(x + dx, y + dy, z + dz) {
                        faces.push(Face {
                            center: [
                                center.0 + dx as f64 * 0.5,
                                center.1 + dy as f64 * 0.5,
                                center.2 + dz as f64 * 0.5,
                            ],
                            axis,
                            sign: (dx + dy + dz) as f64,
                        });
                    }
                }
            }
        }
    }
    faces
}

/// Uniform point on the exposed surface: faces are unit squares, so a
/// uniform face pick plus uniform in-square offset is area-weighted.
pub fn sample_points_on_faces(faces: &[Face], n: usize, rng: &mut Rng) -> Vec<[f64; 3]> {
    if faces.is_empty() {
        return Vec::new();
    }
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let f = faces[rng.below(faces.len())];
        let du = rng.next_f64() - 0.5;
        let dv = rng.next_f64() - 0.5;
        let mut p = f.center;
        let mut k = 0;
        for a in 0..3 {
            if a != f.axis {
                p[a] += if k == 0 { du } else { dv };
                k += 1;
            }
        }
        out.push(p);
    }
    out
}

/// Surface point cloud for the encoder, normalized with d = (chunk, chunk,
/// chunk). Empty chunks yield points on the chunk floor.
pub fn sample_chunk_point_cloud(chunk: &ChunkSample, n: usize, rng: &mut Rng) -> Vec<[f64; 3]> {
    let faces = exposed_faces(chunk);
    let pts = if faces.is_empty() {
        let c = chunk.chunk_size as f64;
        (0..n)
            .map(|_| [rng.next_f64() * c, 0.0, rng.next_f64() * c])
            .collect()
    } else {
        sample_points_on_faces(&faces, n, rng)
    };
    let c = chunk.chunk_size as f64;
    normalize_coords(&pts, [c, c, c]).expect("chunk size positive")
}

/// Training queries mirroring the evaluation protocol: one quarter
/// stratified onto occupied volume, one quarter onto unoccupied volume,
/// and half near-surface (uniform surface point plus sigma = 1 voxel
/// Gaussian offset, clamped into the volume box). Labels read from the
/// chunk occupancy. Strata that cannot be filled (a fully solid or fully
/// empty chunk) fall back to plain uniform samples.
pub fn sample_query_points(chunk: &ChunkSample, n: usize, rng: &mut Rng) -> QueryBatch {
    let c = chunk.chunk_size as f64;
    let h = chunk.h_vox.max(1) as f64;
    let faces = exposed_faces(chunk);
    let quarter = n / 4;
    let mut coords = Vec::with_capacity(n);
    let mut stratified = |want: bool, count: usize, coords: &mut Vec<[f64; 3]>| {
        let mut found = 0usize;
        let mut attempts = 0usize;
        while found < count && attempts < count * 64 {
            let p = [rng.next_f64() * c, rng.next_f64() * h, rng.next_f64() * c];
            attempts += 1;
            if chunk_occupancy_at(chunk, p) == want {
                coords.push(p);
                found += 1;
            }
        }
        while found < count {
            coords.push([rng.next_f64() * c, rng.next_f64() * h, rng.next_f64() * c]);
            found += 1;
        }
    };
    stratified(true, quarter, &mut coords);
    stratified(false, quarter, &mut coords);
    // near-surface half: tangential jitter within the face plus a Gaussian
    // offset along the face normal, alternating inward/outward so both
    // sides of every boundary are supervised evenly
    let mut inward = false;
    while coords.len() < n {
        if faces.is_empty() {
            coords.push([rng.next_f64() * c, rng.next_f64() * h, rng.next_f64() * c]);
            continue;
        }
        let f = faces[rng.below(faces.len())];
        let du = rng.next_f64() - 0.5;
        let dv = rng.next_f64() - 0.5;
        let mut p = f.center;
        let mut k = 0;
        for a in 0..3 {
            if a != f.axis {
                p[a] += if k == 0 { du } else { dv };
                k += 1;
            }
        }
        let offset = rng.next_normal().abs() * if inward { -f.sign } else { f.sign };
        inward = !inward;
        p[f.axis] += offset;
        let p = [
            p[0].clamp(0.0, c - 1e-9),
            p[1].clamp(0.0, h - 1e-9),
            p[2].clamp(0.0, c - 1e-9),
        ];
        coords.push(p);
    }
    let labels = coords.iter().map(|&p| chunk_occupancy_at(chunk, p)).collect();
    let coords_norm = normalize_coords(&coords, [c, c, c]).expect("chunk size positive");
    QueryBatch { coords_vox: coords, coords_norm, labels }
}

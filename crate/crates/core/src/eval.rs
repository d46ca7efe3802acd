//! Reconstruction metrics: occupancy IOU on a stratified query split,
//! Chamfer Distance and F-Score on surface point clouds, and denoiser
//! call-count reports for outpainting comparisons.
//!
//! Chamfer distances are unsquared (Euclidean); F-Score comparisons are
//! inclusive (d <= threshold). Both choices are recorded in the report.

use crate::chunks::{chunk_occupancy_at, exposed_faces, normalize_coords, ChunkSample, QueryBatch};
use crate::error::{Error, Result};
use crate::rng::Rng;

/// |pred AND gt| / |pred OR gt|; defined as 1 when both sets are empty.
pub fn iou(pred: &[bool], gt: &[bool]) -> f64 {
    assert_eq!(pred.len(), gt.len(), "iou label lengths differ");
    let mut inter = 0usize;
    let mut union = 0usize;
    for (&p, &g) in pred.iter().zip(gt) {
        if p && g {
            inter += 1;
        }
        if p || g {
            union += 1;
        }
    }
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

/// Uniform-grid spatial index for nearest-neighbor queries.
struct GridIndex<'a> {
    points: &'a [[f32; 3]],
    origin: [f32; 3],
    cell: f32,
    dims: [usize; 3],
    cells: Vec<Vec<u32>>,
}

impl<'a> GridIndex<'a> {
    fn build(points: &'a [[f32; 3]]) -> Self {
        let mut lo = [f32::INFINITY; 3];
        let mut hi = [f32::NEG_INFINITY; 3];
        for p in points {
            for a in 0..3 {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
        }
        let extent = [
            (hi[0] - lo[0]).max(1e-6),
            (hi[1] - lo[1]).max(1e-6),
            (hi[2] - lo[2]).max(1e-6),
        ];
        // aim for a few points per cell
        let target = (points.len() as f64 / 2.0).cbrt().ceil().max(1.0) as usize;
        let cell = (extent[0].max(extent[1]).max(extent[2])) / target as f32;
        let dims = [
            ((extent[0] / cell).ceil() as usize + 1).max(1),
            ((extent[1] / cell).ceil() as usize + 1).max(1),
            ((extent[2] / cell).ceil() as usize + 1).max(1),
        ];
        let mut cells = vec![Vec::new(); dims[0] * dims[1] * dims[2]];
        for (i, p) in points.iter().enumerate() {
            let c = Self::cell_of_static(p, &lo, cell, &dims);
            cells[c].push(i as u32);
        }
        GridIndex { points, origin: lo, cell, dims, cells }
    }

    fn cell_of_static(p: &[f32; 3], origin: &[f32; 3], cell: f32, dims: &[usize; 3]) -> usize {
        let ix = (((p[0] - origin[0]) / cell) as usize).min(dims[0] - 1);
        let iy = (((p[1] - origin[1]) / cell) as usize).min(dims[1] - 1);
        let iz = (((p[2] - origin[2]) / cell) as usize).min(dims[2] - 1);
        (ix * dims[1] + iy) * dims[2] + iz
    }

    /// Distance to the nearest indexed point, exact (expanding ring search).
    fn nearest_distance(&self, q: &[f32; 3]) -> f64 {
        let qi = [
            (((q[0] - self.origin[0]) / self.cell).floor() as i64).clamp(0, self.dims[0] as i64 - 1),
            (((q[1] - self.origin[1]) / self.cell).floor() as i64).clamp(0, self.dims[1] as i64 - 1),
            (((q[2] - self.origin[2]) / self.cell).floor() as i64).clamp(0, self.dims[2] as i64 - 1),
        ];
        let max_ring = self.dims.iter().max().unwrap() + 1;
        let mut best = f64::INFINITY;
        for ring in 0..=max_ring {
            // once a candidate is found, one extra ring guarantees exactness
            if best.is_finite() {
                let safe = (ring as f64 - 1.0) * self.cell as f64;
                if safe > 0.0 && best <= safe * safe {
                    break;
                }
            }
            let r = ring as i64;
            for dx in -r..=r {
                for dy in -r..=r {
                    for dz in -r..=r {
                        if dx.abs().max(dy.abs()).max(dz.abs()) != r {
                            continue;
                        }
                        let (cx, cy, cz) = (qi[0] + dx, qi[1] + dy, qi[2] + dz);
                        if cx < 0
                            || cy < 0
                            || cz < 0
                            || cx >= self.dims[0] as i64
                            || cy >= self.dims[1] as i64
                            || cz >= self.dims[2] as i64
                        {
                            continue;
                        }
                        let cell =
                            (cx as usize * self.dims[1] + cy as usize) * self.dims[2] + cz as usize;
                        for &pi in &self.cells[cell] {
                            let p = self.points[pi as usize];
                            let d2 = (0..3)
                                .map(|a| (p[a] as f64 - q[a] as f64).powi(2))
                                .sum::<f64>();
                            best = best.min(d2);
                        }
                    }
                }
            }
        }
        best.sqrt()
    }
}

/// Chamfer distance (mean nearest-neighbor distance both ways) and F-Score
/// at `threshold` (precision/recall harmonic mean, inclusive comparison).
pub fn chamfer_f(pc_a: &[[f32; 3]], pc_b: &[[f32; 3]], threshold: f64) -> Result<(f64, f64)> {
    if pc_a.is_empty() || pc_b.is_empty() {
        return Err(Error::invalid("chamfer needs non-empty point clouds"));
    }
    let idx_b = GridIndex::build(pc_b);
    let idx_a = GridIndex::build(pc_a);
    let mut sum_ab = 0.0;
    let mut hit_ab = 0usize;
    for p in pc_a {
        let d = idx_b.nearest_distance(p);
        sum_ab += d;
        if d <= threshold {
            hit_ab += 1;
        }
    }
    let mut sum_ba = 0.0;
    let mut hit_ba = 0usize;
    for p in pc_b {
        let d = idx_a.nearest_distance(p);
        sum_ba += d;
        if d <= threshold {
            hit_ba += 1;
        }
    }
    let cd = sum_ab / pc_a.len() as f64 + sum_ba / pc_b.len() as f64;
    let precision = hit_ab as f64 / pc_a.len() as f64;
    let recall = hit_ba as f64 / pc_b.len() as f64;
    let f = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Ok((cd, f))
}

/// Brute-force O(n*m) chamfer used as the oracle in tests.
pub fn chamfer_f_brute(pc_a: &[[f32; 3]], pc_b: &[[f32; 3]], threshold: f64) -> Result<(f64, f64)> {
    if pc_a.is_empty() || pc_b.is_empty() {
        return Err(Error::invalid("chamfer needs non-empty point clouds"));
    }
    let nn = |from: &[[f32; 3]], to: &[[f32; 3]]| -> (f64, usize) {
        let mut sum = 0.0;
        let mut hits = 0;
        for p in from {
            let mut best = f64::INFINITY;
            for q in to {
                let d2 = (0..3).map(|a| (p[a] as f64 - q[a] as f64).powi(2)).sum::<f64>();
                best = best.min(d2);
            }
            let d = best.sqrt();
            sum += d;
            if d <= threshold {
                hits += 1;
            }
        }
        (sum, hits)
    };
    let (sum_ab, hit_ab) = nn(pc_a, pc_b);
    let (sum_ba, hit_ba) = nn(pc_b, pc_a);
    let cd = sum_ab / pc_a.len() as f64 + sum_ba / pc_b.len() as f64;
    let precision = hit_ab as f64 / pc_a.len() as f64;
    let recall = hit_ba as f64 / pc_b.len() as f64;
    let f = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Ok((cd, f))
}

/// Stratified evaluation queries: half split between occupied and
/// unoccupied volume samples, half near-surface (surface point plus
/// sigma = 1 voxel Gaussian offset). Counts are exact; strata that cannot
/// be filled (e.g. no unoccupied voxels) fall back to uniform samples.
pub fn eval_query_split(chunk: &ChunkSample, n: usize, rng: &mut Rng) -> QueryBatch {
    let c = chunk.chunk_size as f64;
    let h = chunk.h_vox.max(1) as f64;
    let quarter = n / 4;
    let near = n - 2 * quarter;
    let mut coords: Vec<[f64; 3]> = Vec::with_capacity(n);

    let mut stratified = |want_occupied: bool, count: usize, coords: &mut Vec<[f64; 3]>| {
        let mut found = 0usize;
        let mut attempts = 0usize;
        while found < count && attempts < count * 200 {
            let p = [rng.next_f64() * c, rng.next_f64() * h, rng.next_f64() * c];
            attempts += 1;
            if chunk_occupancy_at(chunk, p) == want_occupied {
                coords.push(p);
                found += 1;
            }
        }
        // fall back to uniform when the stratum is (nearly) empty
        while found < count {
            coords.push([rng.next_f64() * c, rng.next_f64() * h, rng.next_f64() * c]);
            found += 1;
        }
    };
    stratified(true, quarter, &mut coords);
    stratified(false, quarter, &mut coords);

    let faces = exposed_faces(chunk);
    for _ in 0..near {
        if faces.is_empty() {
            coords.push([rng.next_f64() * c, rng.next_f64() * h, rng.next_f64() * c]);
            continue;
        }
        let f = faces[rng.below(faces.len())];
        coords.push([
            (f.center[0] + rng.next_normal()).clamp(0.0, c - 1e-9),
            (f.center[1] + rng.next_normal()).clamp(0.0, h - 1e-9),
            (f.center[2] + rng.next_normal()).clamp(0.0, c - 1e-9),
        ]);
    }
    let labels = coords.iter().map(|&p| chunk_occupancy_at(chunk, p)).collect();
    let coords_norm = normalize_coords(&coords, [c, c, c]).expect("chunk size positive");
    QueryBatch { coords_vox: coords, coords_norm, labels }
}

/// Exact denoiser-call counts for the two outpainting methods.
/// Explicit outpainting runs `steps` calls per quad; RePaint with r
/// resampling repeats runs steps + (r-1)*(steps-1) (the final timestep
/// cannot re-noise).
pub fn denoiser_calls_explicit(quads: usize, steps: usize) -> usize {
    quads * steps
}

pub fn denoiser_calls_repaint(quads: usize, steps: usize, resample_r: usize) -> usize {
    assert!(resample_r >= 1 && steps >= 1);
    quads * (steps + (resample_r - 1) * (steps - 1))
}

/// Structured metric report emitted as one JSON document per run.
#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct MetricReport {
    pub iou: f64,
    pub cd: f64,
    pub f_score: f64,
    pub eval_queries_per_chunk: usize,
    pub surface_points_per_chunk: usize,
    pub f_score_threshold: f64,
    pub cd_distance: String,
    pub f_score_comparison: String,
    pub chunk_count: usize,
    pub per_chunk: Vec<ChunkMetrics>,
}

#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct ChunkMetrics {
    pub index: usize,
    pub iou: f64,
    pub cd: f64,
    pub f_score: f64,
    pub height_error_vox: f64,
}

/// Wall-clock and call-count summary of one generation run.
#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct NfeReport {
    pub method: String,
    pub quads: usize,
    pub inference_steps: usize,
    pub resample_r: usize,
    pub denoiser_calls: usize,
    pub embedding_gen_seconds: f64,
    pub occupancy_decode_seconds: f64,
}

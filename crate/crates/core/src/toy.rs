//! Procedural training scenes: flat ground plus boxes, towers, or arches
//! with widely varying heights, in three styles so cross-style blending
//! can be exercised at desk scale.

use std::path::Path;

use crate::chunks::dataset::{split_of, DatasetWriter, Split};
use crate::chunks::{compute_sample_maps, extract_quad_chunk, farthest_point_sampling};
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::voxel::{fix_ground, OccupancyGrid, GROUND_THICKNESS};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ToyStyle {
    Blocks,
    Towers,
    Arches,
}

impl ToyStyle {
    pub fn name(self) -> &'static str {
        match self {
            ToyStyle::Blocks => "blocks",
            ToyStyle::Towers => "towers",
            ToyStyle::Arches => "arches",
        }
    }
}

impl std::str::FromStr for ToyStyle {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "blocks" => Ok(ToyStyle::Blocks),
            "towers" => Ok(ToyStyle::Towers),
            "arches" => Ok(ToyStyle::Arches),
            other => Err(Error::invalid(format!("unknown toy style {other:?}"))),
        }
    }
}

/// Scene description persisted as JSON next to the voxel file.
#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct SceneSpec {
    pub seed: u64,
    pub style: ToyStyle,
    pub dims: [usize; 3],
}

fn fill_box(grid: &mut OccupancyGrid, x0: usize, y0: usize, z0: usize, w: usize, h: usize, d: usize) {
    let (nx, ny, nz) = grid.dims();
    for x in x0..(x0 + w).min(nx) {
        for y in y0..(y0 + h).min(ny) {
            for z in z0..(z0 + d).min(nz) {
                grid.set(x, y, z, true);
            }
        }
    }
}

/// Deterministic scene synthesis. Ground is a uniform 5-voxel slab; the
/// towers style always places one structure reaching ny - 8 so tall-chunk
/// handling gets exercised.
pub fn synth_scene(seed: u64, style: ToyStyle, dims: [usize; 3]) -> Result<OccupancyGrid> {
    let [nx, ny, nz] = dims;
    if nx < 16 || nz < 16 || ny < GROUND_THICKNESS + 8 {
        return Err(Error::invalid(format!(
            "scene dims {dims:?} too small for ground plus structures"
        )));
    }
    let mut rng = Rng::new(Rng::derive(seed, &[0x70_5C, style as u64]));
    let grid = OccupancyGrid::new(nx, ny, nz)?;
    let mut grid = fix_ground(&grid, GROUND_THICKNESS)?;
    let g = GROUND_THICKNESS;
    let area = nx * nz;

    match style {
        ToyStyle::Blocks => {
            let count = (area / 650).max(6);
            let h_cap = ((ny - g) / 4).max(8);
            for _ in 0..count {
                let w = 4 + rng.below(9);
                let d = 4 + rng.below(9);
                let h = 4 + rng.below(h_cap);
                let x = rng.below(nx.saturating_sub(w).max(1));
                let z = rng.below(nz.saturating_sub(d).max(1));
                fill_box(&mut grid, x, g, z, w, h, d);
            }
        }
        ToyStyle::Towers => {
            // wide low pedestals
            for _ in 0..(area / 1100).max(2) {
                let w = 6 + rng.below(6);
                let d = 6 + rng.below(6);
                let x = rng.below(nx.saturating_sub(w).max(1));
                let z = rng.below(nz.saturating_sub(d).max(1));
                fill_box(&mut grid, x, g, z, w, d / 2 + 3, d);
            }
            let count = (area / 1300).max(3);
            let h_max = ny - 8 - g;
            for k in 0..count {
                let w = 2 + rng.below(4);
                let d = 2 + rng.below(4);
                // one guaranteed giant; the rest skew low so heights vary
                // widely without every tower scraping the ceiling
                let h = if k == 0 {
                    h_max
                } else {
                    let u = rng.next_f64();
                    (8.0 + (h_max as f64 - 8.0) * u * u * u) as usize
                };
                let x = rng.below(nx.saturating_sub(w).max(1));
                let z = rng.below(nz.saturating_sub(d).max(1));
                fill_box(&mut grid, x, g, z, w, h, d);
            }
        }
        ToyStyle::Arches => {
            let count = (area / 600).max(3);
            for _ in 0..count {
                let pier = 2 + rng.below(2);
                let h = 8 + rng.below((ny - g) / 2);
                let span = 5 + rng.below(10);
                let deck = 2 + rng.below(2);
                let along_x = rng.next_f64() < 0.5;
                let (need_x, need_z) = if along_x {
                    (2 * pier + span, pier + 1)
                } else {
                    (pier + 1, 2 * pier + span)
                };
                if nx <= need_x || nz <= need_z || g + h + deck >= ny {
                    continue;
                }
                let x = rng.below(nx - need_x);
                let z = rng.below(nz - need_z);
                if along_x {
                    fill_box(&mut grid, x, g, z, pier, h, pier);
                    fill_box(&mut grid, x + pier + span, g, z, pier, h, pier);
                    fill_box(&mut grid, x, g + h, z, 2 * pier + span, deck, pier);
                } else {
                    fill_box(&mut grid, x, g, z, pier, h, pier);
                    fill_box(&mut grid, x, g, z + pier + span, pier, h, pier);
                    fill_box(&mut grid, x, g + h, z, pier, deck, 2 * pier + span);
                }
            }
            // low clutter so depth variation is dense
            for _ in 0..(area / 500).max(2) {
                let w = 3 + rng.below(4);
                let d = 3 + rng.below(4);
                let x = rng.below(nx.saturating_sub(w).max(1));
                let z = rng.below(nz.saturating_sub(d).max(1));
                fill_box(&mut grid, x, g, z, w, 3 + rng.below(6), d);
            }
        }
    }
    Ok(grid)
}

/// Synthesizes a scene and regenerates with bumped seeds until its sample
/// map has at least one valid quad origin. Returns the grid and the seed
/// that produced it.
pub fn synth_scene_valid(
    seed: u64,
    style: ToyStyle,
    dims: [usize; 3],
    chunk_size: usize,
    depth_threshold: f64,
) -> Result<(OccupancyGrid, u64)> {
    const MAX_TRIES: u64 = 16;
    for bump in 0..MAX_TRIES {
        let s = seed + bump;
        let grid = synth_scene(s, style, dims)?;
        let maps = compute_sample_maps(&grid, 2 * chunk_size, depth_threshold)?;
        if maps.valid.iter().any(|&v| v) {
            return Ok((grid, s));
        }
    }
    Err(Error::invalid(format!(
        "no valid sample windows after {MAX_TRIES} seeds (style {style:?}, dims {dims:?})"
    )))
}

#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct DatasetBuildReport {
    pub total: usize,
    pub train: usize,
    pub val: usize,
    pub per_scene: Vec<usize>,
}

/// Samples quad chunks from the scenes via sample maps and farthest point
/// sampling, persisting them into one dataset directory. The train/val
/// membership is the deterministic origin hash.
pub fn build_dataset(
    scenes: &[OccupancyGrid],
    quads_per_scene: usize,
    chunk_size: usize,
    depth_threshold: f64,
    dir: &Path,
) -> Result<DatasetBuildReport> {
    let mut writer = DatasetWriter::create(dir, chunk_size)?;
    let mut report =
        DatasetBuildReport { total: 0, train: 0, val: 0, per_scene: Vec::with_capacity(scenes.len()) };
    for (scene_id, grid) in scenes.iter().enumerate() {
        let maps = compute_sample_maps(grid, 2 * chunk_size, depth_threshold)?;
        let origins = maps.valid_origins();
        if origins.is_empty() {
            report.per_scene.push(0);
            continue;
        }
        // corner-anchored windows: the quad center sits one chunk inward
        let centers: Vec<[f64; 2]> = origins
            .iter()
            .map(|&(x, z)| [(x + chunk_size) as f64, (z + chunk_size) as f64])
            .collect();
        let k = quads_per_scene.min(centers.len());
        let selected = farthest_point_sampling(&centers, k, 0)?;
        for &s in &selected {
            let (ci, ck) = (centers[s][0] as usize, centers[s][1] as usize);
            let quad = extract_quad_chunk(grid, ci, ck, chunk_size)?;
            match split_of(quad.origin) {
                Split::Train => report.train += 1,
                Split::Val => report.val += 1,
            }
            writer.append(&quad, scene_id as u32)?;
            report.total += 1;
        }
        report.per_scene.push(k);
    }
    writer.finish()?;
    Ok(report)
}

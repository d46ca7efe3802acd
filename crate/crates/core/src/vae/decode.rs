//! Height-pruned inference decoding: predict the chunk height, evaluate
//! occupancy on a lattice capped at that height, and extract a mesh.

use super::{LatentSet, VecsetVae};
use crate::error::Result;
use crate::nn::Scalar;
use crate::voxel::{marching_cubes, Mesh, OccupancyGrid, ScalarVolume};

/// Hard cap on the lattice height as a multiple of the lateral resolution;
/// bounds memory when a barely-trained height head overshoots.
pub const MAX_HEIGHT_FACTOR: usize = 16;

/// Queries are evaluated in tiles of at most this many points.
pub const DECODE_TILE: usize = 65_536;

#[derive(Clone, Debug)]
pub struct DecodedChunk {
    /// Thresholded occupancy on the decode lattice (res, ny, res).
    pub grid: OccupancyGrid,
    /// Occupancy probabilities on the same lattice.
    pub probs: Vec<f32>,
    /// Marching-cubes mesh of the probability field at level 0.5, in
    /// lattice units.
    pub mesh: Mesh,
    /// Predicted height, normalized (the raw head output).
    pub h_norm: f64,
    /// Lattice height actually evaluated.
    pub ny: usize,
    pub warning: Option<String>,
}

impl<T: Scalar> VecsetVae<T> {
    /// Decodes one latent at `resolution` lattice points per chunk side.
    /// The predicted height prunes the query volume to
    /// (res, ceil(res * (h_norm + 1) / 2), res).
    pub fn decode_chunk(&self, latent: &LatentSet, resolution: usize) -> Result<DecodedChunk> {
        let h_norm = self.predict_height(latent)?;
        let res = resolution.max(1);
        if h_norm <= -1.0 {
            return Ok(DecodedChunk {
                grid: OccupancyGrid::new(res, 1, res)?,
                probs: vec![0.0; res * res],
                mesh: Mesh::default(),
                h_norm,
                ny: 0,
                warning: Some(format!(
                    "predicted height {h_norm:.3} <= -1; returning an empty chunk"
                )),
            });
        }
        let ny_raw = (res as f64 * (h_norm + 1.0) / 2.0).ceil() as usize;
        let ny = ny_raw.clamp(1, MAX_HEIGHT_FACTOR * res);
        let warning = (ny != ny_raw).then(|| format!("lattice height {ny_raw} clamped to {ny}"));

        let probs = self.occupancy_lattice(latent, res, ny)?;
        let mut grid = OccupancyGrid::new(res, ny, res)?;
        for (i, &p) in probs.iter().enumerate() {
            if p > 0.5 {
                grid.set_linear(i, true);
            }
        }
        // pad the probability field with empties so meshes close
        let (px, py, pz) = (res + 2, ny + 2, res + 2);
        let mut field = vec![0f32; px * py * pz];
        for x in 0..res {
            for y in 0..ny {
                for z in 0..res {
                    field[((x + 1) * py + (y + 1)) * pz + (z + 1)] = probs[(x * ny + y) * res + z];
                }
            }
        }
        let mut mesh = marching_cubes(&ScalarVolume::new(px, py, pz, field)?, 0.5)?;
        for v in &mut mesh.vertices {
            v[0] -= 1.0;
            v[1] -= 1.0;
            v[2] -= 1.0;
        }
        Ok(DecodedChunk { grid, probs, mesh, h_norm, ny, warning })
    }

    /// Occupancy probabilities at lattice cell centers, x-major y z order.
    /// Lattice coordinates normalize with d = (res, res, res), so the y
    /// range extends beyond +1 exactly like tall training chunks.
    pub fn occupancy_lattice(&self, latent: &LatentSet, res: usize, ny: usize) -> Result<Vec<f32>> {
        let mut queries = Vec::with_capacity(res * ny * res);
        for x in 0..res {
            for y in 0..ny {
                for z in 0..res {
                    queries.push([
                        2.0 * (x as f64 + 0.5) / res as f64 - 1.0,
                        2.0 * (y as f64 + 0.5) / res as f64 - 1.0,
                        2.0 * (z as f64 + 0.5) / res as f64 - 1.0,
                    ]);
                }
            }
        }
        let mut probs = Vec::with_capacity(queries.len());
        for tile in queries.chunks(DECODE_TILE) {
            let logits = self.occupancy_logits(latent, tile)?;
            probs.extend(logits.iter().map(|&l| (1.0 / (1.0 + (-l).exp())) as f32));
        }
        Ok(probs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Tensor;
    use crate::rng::Rng;
    use crate::vae::VaeConfig;

    fn tiny_vae() -> VecsetVae<f32> {
        let cfg = VaeConfig {
            latent_count: 4,
            channels: 16,
            n_points: 64,
            decoder_layers: 1,
            heads: 2,
            n_freq: 4,
            chunk_size: 8,
            ..Default::default()
        };
        VecsetVae::new(cfg, 55).unwrap()
    }

    fn latent(vae: &VecsetVae<f32>, seed: u64) -> LatentSet {
        let mut rng = Rng::new(seed);
        LatentSet::new(Tensor::randn(
            vec![vae.cfg().latent_count, vae.cfg().channels],
            1.0,
            &mut rng,
        ))
        .unwrap()
    }

    #[test]
    fn lattice_height_tracks_predicted_height() {
        let mut vae = tiny_vae();
        let z = latent(&vae, 1);
        // force the height head to a known output by zeroing the attention
        // path and pinning the bias: h = bias
        let wid = vae.params.id("height.fc.w").unwrap();
        vae.params.tensor_mut(wid).fill(0.0);
        let bid = vae.params.id("height.fc.b").unwrap();
        for (target, want_ny) in [(1.0f32, 8usize), (3.0, 16), (0.0, 4)] {
            vae.params.tensor_mut(bid).data_mut()[0] = target;
            let decoded = vae.decode_chunk(&z, 8).unwrap();
            assert_eq!(decoded.ny, want_ny, "h_norm {target}");
            assert_eq!(decoded.grid.dims(), (8, want_ny, 8));
        }
    }

    #[test]
    fn degenerate_height_returns_empty_chunk_with_warning() {
        let mut vae = tiny_vae();
        let z = latent(&vae, 2);
        let wid = vae.params.id("height.fc.w").unwrap();
        vae.params.tensor_mut(wid).fill(0.0);
        let bid = vae.params.id("height.fc.b").unwrap();
        vae.params.tensor_mut(bid).data_mut()[0] = -1.5;
        let decoded = vae.decode_chunk(&z, 8).unwrap();
        assert!(decoded.warning.is_some());
        assert_eq!(decoded.ny, 0);
        assert!(decoded.mesh.is_empty());
        assert_eq!(decoded.grid.occupied_count(), 0);
    }

    #[test]
    fn decode_is_deterministic() {
        let vae = tiny_vae();
        let z = latent(&vae, 3);
        let a = vae.decode_chunk(&z, 8).unwrap();
        let b = vae.decode_chunk(&z, 8).unwrap();
        assert_eq!(a.probs, b.probs);
        assert_eq!(a.grid, b.grid);
    }
}

//! VAE training loop: per-chunk items are prepared and differentiated in
//! parallel, gradients reduce in a fixed order, and Adam applies the step.
//! Every random draw derives from (seed, epoch, chunk index), so runs are
//! reproducible bit-for-bit at any worker count.

use rayon::prelude::*;

use super::{VaeLossParts, VaeTrainItem, VecsetVae};
use crate::chunks::{
    chunk_height_target, sample_chunk_point_cloud, sample_query_points, ChunkSample, QuadChunk,
};
use crate::error::Result;
use crate::nn::{GradMap, Session, Tensor};
use crate::rng::Rng;

#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct VaeTrainConfig {
    pub epochs: usize,
    /// Chunks per optimizer step.
    pub batch_size: usize,
    /// Occupancy queries drawn per chunk per visit.
    pub queries_per_chunk: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub seed: u64,
    /// Worker threads for item preparation and backprop.
    pub workers: usize,
}

impl Default for VaeTrainConfig {
    fn default() -> Self {
        VaeTrainConfig {
            epochs: 8,
            batch_size: 16,
            queries_per_chunk: 512,
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            seed: 7,
            workers: 0, // 0 = logical cores
        }
    }
}

/// Flattens quads into their four chunks, preserving slot order.
pub fn quads_to_chunks(quads: &[QuadChunk]) -> Vec<ChunkSample> {
    quads.iter().flat_map(|q| q.chunks.iter().cloned()).collect()
}

/// Fresh training item for one chunk visit: two surface point clouds and a
/// new query batch, all from the visit-specific stream.
pub fn prepare_item(
    chunk: &ChunkSample,
    n_points: usize,
    n_queries: usize,
    mut rng: Rng,
) -> VaeTrainItem {
    let points_p = sample_chunk_point_cloud(chunk, n_points, &mut rng);
    let points_q = sample_chunk_point_cloud(chunk, n_points, &mut rng);
    let queries = sample_query_points(chunk, n_queries, &mut rng);
    VaeTrainItem {
        points_p,
        points_q,
        queries_norm: queries.coords_norm,
        labels: queries.labels,
        height_target: chunk_height_target(chunk.h_vox, chunk.chunk_size),
    }
}

#[derive(Clone, Copy, Debug)]
pub struct TrainStepInfo {
    pub epoch: usize,
    pub step: usize,
    pub parts: VaeLossParts,
}

pub fn train_vae(
    vae: &mut VecsetVae<f32>,
    chunks: &[ChunkSample],
    cfg: &VaeTrainConfig,
    mut progress: impl FnMut(TrainStepInfo),
) -> Result<VaeLossParts> {
    assert!(!chunks.is_empty(), "no training chunks");
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .expect("thread pool");
    let n_points = vae.cfg().n_points;
    let mut order: Vec<usize> = (0..chunks.len()).collect();
    let mut last = VaeLossParts::default();
    let mut step = 0usize;
    let total_steps = cfg.epochs * chunks.len().div_ceil(cfg.batch_size).max(1);
    for epoch in 0..cfg.epochs {
        let mut shuffle_rng = Rng::new(Rng::derive(cfg.seed, &[0xE0, epoch as u64]));
        shuffle_rng.shuffle(&mut order);
        for batch in order.chunks(cfg.batch_size) {
            let model = vae.model.clone();
            let params = &vae.params;
            let results: Vec<(GradMap<f32>, VaeLossParts)> = pool.install(|| {
                batch
                    .par_iter()
                    .map(|&ci| {
                        let item_rng =
                            Rng::new(Rng::derive(cfg.seed, &[0xDA, epoch as u64, ci as u64]));
                        let item = prepare_item(
                            &chunks[ci],
                            n_points,
                            cfg.queries_per_chunk,
                            item_rng,
                        );
                        let mut noise_rng =
                            Rng::new(Rng::derive(cfg.seed, &[0x9E, epoch as u64, ci as u64]));
                        let mut sess = Session::new(params);
                        let (loss, parts) = model
                            .loss_graph(&mut sess, &item, &mut noise_rng)
                            .expect("loss graph");
                        (sess.backward(loss), parts)
                    })
                    .collect()
            });
            let scale = 1.0 / batch.len() as f32;
            vae.params.zero_grads();
            let mut parts = VaeLossParts::default();
            for (grads, p) in &results {
                vae.params.accumulate_scaled(grads, scale);
                parts.add(p);
            }
            parts.scale(1.0 / batch.len() as f64);
            // cosine decay to 10% of the base rate
            let frac = step as f64 / total_steps.max(1) as f64;
            let lr = cfg.lr * (0.55 + 0.45 * (std::f64::consts::PI * frac).cos());
            vae.params.adam_step(lr, cfg.beta1, cfg.beta2, cfg.eps);
            last = parts;
            step += 1;
            progress(TrainStepInfo { epoch, step, parts });
        }
    }
    Ok(last)
}

/// Held-out reconstruction check: encodes each chunk with the posterior
/// mean, scores occupancy IOU on a fresh stratified query batch, and the
/// height error in voxels.
pub fn evaluate_vae(
    vae: &VecsetVae<f32>,
    chunks: &[ChunkSample],
    queries_per_chunk: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    assert!(!chunks.is_empty());
    let mut inter = 0usize;
    let mut union = 0usize;
    let mut height_err = 0.0;
    for (ci, chunk) in chunks.iter().enumerate() {
        let mut rng = Rng::new(Rng::derive(seed, &[0xE7A1, ci as u64]));
        let points = sample_chunk_point_cloud(chunk, vae.cfg().n_points, &mut rng);
        let latent = vae.encode(&points, None)?;
        let batch = crate::eval::eval_query_split(chunk, queries_per_chunk, &mut rng);
        let logits = vae.occupancy_logits(&latent, &batch.coords_norm)?;
        for (l, &gt) in logits.iter().zip(&batch.labels) {
            let pred = *l > 0.0;
            if pred && gt {
                inter += 1;
            }
            if pred || gt {
                union += 1;
            }
        }
        let h_norm = vae.predict_height(&latent)?;
        let h_vox = chunk.chunk_size as f64 * (h_norm + 1.0) / 2.0;
        height_err += (h_vox - chunk.h_vox as f64).abs();
    }
    let iou = if union == 0 { 1.0 } else { inter as f64 / union as f64 };
    Ok((iou, height_err / chunks.len() as f64))
}

/// Encodes every chunk of every quad with the posterior mean (the latent
/// used downstream by diffusion), preserving quad-slot order.
pub fn encode_dataset(
    vae: &VecsetVae<f32>,
    quads: &[QuadChunk],
    seed: u64,
    workers: usize,
) -> Result<Vec<super::LatentSet>> {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(workers).build().expect("thread pool");
    let n_points = vae.cfg().n_points;
    let encoded: Vec<Result<[super::LatentSet; 4]>> = pool.install(|| {
        quads
            .par_iter()
            .enumerate()
            .map(|(qi, quad)| {
                let mut out = Vec::with_capacity(4);
                for (slot, chunk) in quad.chunks.iter().enumerate() {
                    let mut rng =
                        Rng::new(Rng::derive(seed, &[0xEC0D, qi as u64, slot as u64]));
                    let points = sample_chunk_point_cloud(chunk, n_points, &mut rng);
                    out.push(vae.encode(&points, None)?);
                }
                Ok(out.try_into().map_err(|_| ()).expect("four slots"))
            })
            .collect()
    });
    let mut flat = Vec::with_capacity(quads.len() * 4);
    for quad in encoded {
        flat.extend(quad?);
    }
    Ok(flat)
}

/// Mean latent for nearest-style comparisons: flattens V x c to a vector.
pub fn latent_vector(l: &super::LatentSet) -> Tensor<f32> {
    l.z.clone()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vae::VaeConfig;
    use crate::voxel::OccupancyGrid;

    fn toy_chunk(seed: u64) -> ChunkSample {
        let mut rng = Rng::new(seed);
        let c = 8;
        let h = 3 + rng.below(5);
        let mut occ = OccupancyGrid::new(c, h, c).unwrap();
        for x in 0..c {
            for z in 0..c {
                occ.set(x, 0, z, true);
            }
        }
        for _ in 0..6 {
            let (x, z) = (rng.below(c), rng.below(c));
            let t = 1 + rng.below(h - 1);
            for y in 0..t {
                occ.set(x, y, z, true);
            }
        }
        ChunkSample { origin: (4, 4), chunk_size: c, h_vox: h, occ }
    }

    #[test]
    fn training_is_deterministic_across_worker_counts() {
        let chunks: Vec<ChunkSample> = (0..6).map(|i| toy_chunk(100 + i)).collect();
        let cfg = VaeConfig {
            latent_count: 2,
            channels: 8,
            n_points: 32,
            decoder_layers: 1,
            heads: 2,
            n_freq: 2,
            chunk_size: 8,
            ..Default::default()
        };
        let train_cfg = VaeTrainConfig {
            epochs: 2,
            batch_size: 3,
            queries_per_chunk: 32,
            workers: 1,
            ..Default::default()
        };
        let run = |workers: usize| {
            let mut vae = VecsetVae::<f32>::new(cfg.clone(), 11).unwrap();
            let mut tc = train_cfg.clone();
            tc.workers = workers;
            train_vae(&mut vae, &chunks, &tc, |_| {}).unwrap();
            let id = vae.params.id("enc.moments.w").unwrap();
            vae.params.tensor(id).clone()
        };
        let a = run(1);
        let b = run(2);
        assert_eq!(a, b, "worker count changed the training result");
    }

    #[test]
    fn one_step_reduces_loss_on_average() {
        let chunks: Vec<ChunkSample> = (0..8).map(|i| toy_chunk(200 + i)).collect();
        let cfg = VaeConfig {
            latent_count: 4,
            channels: 16,
            n_points: 64,
            decoder_layers: 2,
            heads: 2,
            n_freq: 4,
            chunk_size: 8,
            ..Default::default()
        };
        let mut vae = VecsetVae::<f32>::new(cfg, 12).unwrap();
        let tc = VaeTrainConfig {
            epochs: 6,
            batch_size: 8,
            queries_per_chunk: 64,
            lr: 2e-3,
            workers: 2,
            ..Default::default()
        };
        let mut first = None;
        let mut last = VaeLossParts::default();
        train_vae(&mut vae, &chunks, &tc, |info| {
            if first.is_none() {
                first = Some(info.parts.total);
            }
            last = info.parts;
        })
        .unwrap();
        let first = first.unwrap();
        assert!(
            last.total < first,
            "loss did not improve: first {first}, last {}",
            last.total
        );
    }
}

//! Diffusion training: each step draws a batch of quads, picks one of the
//! four conditioning configurations per sample, noises all four slots at a
//! random timestep, and regresses the injected noise (MSE over every
//! entry). An optional flag restricts the loss to unconditioned slots.

use rayon::prelude::*;

use crate::error::Result;
use crate::nn::{GradMap, ParamStore, Session, Tensor};
use crate::rng::Rng;
use crate::vae::LatentSet;

use super::denoiser::{DenoiserConfig, DenoiserModel};
use super::{build_condition, q_sample, DiffusionSchedule, MaskConfig, QuadLatent};

#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct DiffusionTrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub seed: u64,
    pub workers: usize,
    /// When set, the noise-prediction loss covers only unconditioned slots.
    pub mask_loss_to_unknown: bool,
}

impl Default for DiffusionTrainConfig {
    fn default() -> Self {
        DiffusionTrainConfig {
            epochs: 30,
            batch_size: 16,
            lr: 2e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            seed: 17,
            workers: 0,
            mask_loss_to_unknown: false,
        }
    }
}

/// A trained (or training) diffusion model: denoiser weights plus the
/// latent normalization statistics it was fit on.
pub struct DiffusionModel {
    pub model: DenoiserModel,
    pub params: ParamStore<f32>,
    pub schedule: DiffusionSchedule,
}

impl DiffusionModel {
    pub fn new(cfg: DenoiserConfig, schedule: DiffusionSchedule, seed: u64) -> Self {
        let mut params = ParamStore::new();
        let model = DenoiserModel::init(&mut params, cfg, &mut Rng::new(seed));
        params.add_buffer("latent_norm.mean", Tensor::zeros(vec![1]));
        params.add_buffer("latent_norm.std", Tensor::new(vec![1], vec![1.0]).unwrap());
        DiffusionModel { model, params, schedule }
    }

    pub fn latent_norm(&self) -> (f32, f32) {
        let m = self.params.tensor(self.params.id("latent_norm.mean").unwrap()).data()[0];
        let s = self.params.tensor(self.params.id("latent_norm.std").unwrap()).data()[0];
        (m, s)
    }

    pub fn set_latent_norm(&mut self, mean: f32, std: f32) {
        let mid = self.params.id("latent_norm.mean").unwrap();
        self.params.tensor_mut(mid).data_mut()[0] = mean;
        let sid = self.params.id("latent_norm.std").unwrap();
        self.params.tensor_mut(sid).data_mut()[0] = std.max(1e-6);
    }

    pub fn normalize(&self, q: &QuadLatent) -> QuadLatent {
        let (m, s) = self.latent_norm();
        q.map(|v| (v - m) / s)
    }

    pub fn denormalize(&self, q: &QuadLatent) -> QuadLatent {
        let (m, s) = self.latent_norm();
        q.map(|v| v * s + m)
    }

    pub fn denormalize_latent(&self, l: &LatentSet) -> LatentSet {
        let (m, s) = self.latent_norm();
        LatentSet { z: l.z.map(|v| v * s + m), moments: None }
    }

    pub fn normalize_latent(&self, l: &LatentSet) -> LatentSet {
        let (m, s) = self.latent_norm();
        LatentSet { z: l.z.map(|v| (v - m) / s), moments: None }
    }
}

/// Groups a flat latent list (4 consecutive sets per quad) into quads.
pub fn latents_to_quads(latents: &[LatentSet]) -> Result<Vec<QuadLatent>> {
    if latents.len() % 4 != 0 {
        return Err(crate::error::Error::invalid(format!(
            "latent count {} is not a multiple of 4",
            latents.len()
        )));
    }
    latents
        .chunks(4)
        .map(|s| QuadLatent::from_slots([&s[0], &s[1], &s[2], &s[3]]))
        .collect()
}

/// Scalar mean/std over every latent entry; used to standardize quads
/// before diffusion.
pub fn latent_stats(quads: &[QuadLatent]) -> (f32, f32) {
    let mut sum = 0.0f64;
    let mut n = 0usize;
    for q in quads {
        for &v in q.x.data() {
            sum += v as f64;
            n += 1;
        }
    }
    let mean = sum / n.max(1) as f64;
    let mut var = 0.0f64;
    for q in quads {
        for &v in q.x.data() {
            var += (v as f64 - mean).powi(2);
        }
    }
    let std = (var / n.max(1) as f64).sqrt().max(1e-6);
    (mean as f32, std as f32)
}

/// Uniform draw of one of the four configurations.
pub fn random_config(rng: &mut Rng) -> MaskConfig {
    MaskConfig::ALL[rng.below(4)]
}

pub struct DiffusionStepInfo {
    pub epoch: usize,
    pub step: usize,
    pub loss: f64,
}

/// One training item's loss on a fresh tape: sample config and timestep,
/// noise the quad, and regress epsilon.
fn item_loss(
    model: &DenoiserModel,
    params: &ParamStore<f32>,
    schedule: &DiffusionSchedule,
    quad_norm: &QuadLatent,
    mask_loss_to_unknown: bool,
    rng: &mut Rng,
) -> Result<(GradMap<f32>, f64)> {
    let cfg = random_config(rng);
    let t = 1 + rng.below(schedule.t_max);
    let eps = QuadLatent::noise(quad_norm.latent_count, quad_norm.channels(), rng);
    let x_t = q_sample(quad_norm, schedule, t, &eps);
    let cond = build_condition(cfg, quad_norm);
    let mut sess = Session::new(params);
    let x = sess.constant(x_t.x.clone());
    let eps_hat = model.forward_graph(&mut sess, x, &cond, t)?;
    let loss = if mask_loss_to_unknown {
        // zero out conditioned slots on both sides
        let v = quad_norm.latent_count;
        let c = quad_norm.channels();
        let known = cfg.known_slots();
        let mut weights = Tensor::zeros(vec![4 * v, c]);
        for (s, &k) in known.iter().enumerate() {
            if !k {
                for i in s * v * c..(s + 1) * v * c {
                    weights.data_mut()[i] = 1.0;
                }
            }
        }
        let w = sess.constant(weights);
        let target = sess.constant(eps.x.clone());
        let d = sess.graph.sub(eps_hat, target);
        let dw = sess.graph.mul(d, w);
        let sq = sess.graph.mul(dw, dw);
        sess.graph.mean_all(sq)
    } else {
        let target = sess.constant(eps.x.clone());
        sess.graph.mse(eps_hat, target)
    };
    let value = sess.value(loss).item() as f64;
    Ok((sess.backward(loss), value))
}

/// Trains the denoiser on pre-encoded quads. Latent normalization stats
/// are computed once from the data and stored in the model's buffers.
pub fn train_diffusion(
    dm: &mut DiffusionModel,
    quads: &[QuadLatent],
    cfg: &DiffusionTrainConfig,
    mut progress: impl FnMut(DiffusionStepInfo),
) -> Result<f64> {
    assert!(!quads.is_empty(), "no training quads");
    let (mean, std) = latent_stats(quads);
    dm.set_latent_norm(mean, std);
    let normed: Vec<QuadLatent> = quads.iter().map(|q| dm.normalize(q)).collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .expect("thread pool");
    let mut order: Vec<usize> = (0..normed.len()).collect();
    let mut step = 0usize;
    let mut last = f64::NAN;
    for epoch in 0..cfg.epochs {
        let mut shuffle_rng = Rng::new(Rng::derive(cfg.seed, &[0xD1F, epoch as u64]));
        shuffle_rng.shuffle(&mut order);
        for batch in order.chunks(cfg.batch_size) {
            let model = dm.model.clone();
            let params = &dm.params;
            let schedule = &dm.schedule;
            let results: Vec<(GradMap<f32>, f64)> = pool.install(|| {
                batch
                    .par_iter()
                    .map(|&qi| {
                        let mut rng = Rng::new(Rng::derive(
                            cfg.seed,
                            &[0x57E9, epoch as u64, qi as u64],
                        ));
                        item_loss(
                            &model,
                            params,
                            schedule,
                            &normed[qi],
                            cfg.mask_loss_to_unknown,
                            &mut rng,
                        )
                        .expect("diffusion item loss")
                    })
                    .collect()
            });
            let scale = 1.0 / batch.len() as f32;
            dm.params.zero_grads();
            let mut loss = 0.0;
            for (grads, l) in &results {
                dm.params.accumulate_scaled(grads, scale);
                loss += l;
            }
            loss /= batch.len() as f64;
            dm.params.adam_step(cfg.lr, cfg.beta1, cfg.beta2, cfg.eps);
            step += 1;
            last = loss;
            progress(DiffusionStepInfo { epoch, step, loss });
        }
    }
    Ok(last)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::{build_schedule, ScheduleKind};

    #[test]
    fn config_histogram_is_uniform() {
        let mut rng = Rng::new(95);
        let mut counts = [0usize; 4];
        let n = 10_000;
        for _ in 0..n {
            let cfg = random_config(&mut rng);
            let idx = MaskConfig::ALL.iter().position(|&c| c == cfg).unwrap();
            counts[idx] += 1;
        }
        // 3 sigma for a fair multinomial cell: sqrt(n * 1/4 * 3/4) ~ 43.3
        let three_sigma = 3.0 * (n as f64 * 0.25 * 0.75).sqrt();
        for (i, &c) in counts.iter().enumerate() {
            assert!(
                ((c as f64) - 2500.0).abs() <= three_sigma,
                "config {i} count {c} outside 3 sigma"
            );
        }
    }

    #[test]
    fn training_descends_on_structured_latents() {
        let mut rng = Rng::new(96);
        let schedule = build_schedule(50, ScheduleKind::Linear).unwrap();
        let cfg = DenoiserConfig {
            latent_count: 2,
            channels: 4,
            d_model: 16,
            layers: 3,
            heads: 2,
            pe_dim: 4,
        };
        let mut dm = DiffusionModel::new(cfg, schedule, 5);
        // two tight clusters: plenty of structure to learn
        let quads: Vec<QuadLatent> = (0..8)
            .map(|i| {
                let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
                QuadLatent::noise(2, 4, &mut rng).map(|v| sign * 2.0 + 0.05 * v)
            })
            .collect();
        let tc = DiffusionTrainConfig {
            epochs: 80,
            batch_size: 8,
            lr: 2e-3,
            workers: 2,
            ..Default::default()
        };
        let mut losses = Vec::new();
        train_diffusion(&mut dm, &quads, &tc, |info| losses.push(info.loss)).unwrap();
        let head: f64 = losses.iter().take(5).sum::<f64>() / 5.0;
        let tail: f64 = losses.iter().rev().take(5).sum::<f64>() / 5.0;
        assert!(
            tail < 0.7 * head,
            "diffusion loss did not descend: head {head:.4} tail {tail:.4}"
        );
    }

    #[test]
    fn perfect_prediction_gives_zero_loss() {
        // with eps_hat == eps the mse is zero; emulate by computing the
        // masked loss formula directly
        let mut rng = Rng::new(97);
        let eps = QuadLatent::noise(2, 4, &mut rng);
        let diff: f64 = eps
            .x
            .data()
            .iter()
            .zip(eps.x.data())
            .map(|(&a, &b)| ((a - b) as f64).powi(2))
            .sum();
        assert_eq!(diff, 0.0);
    }

    #[test]
    fn training_deterministic_across_workers() {
        let mut rng = Rng::new(98);
        let quads: Vec<QuadLatent> = (0..6).map(|_| QuadLatent::noise(2, 4, &mut rng)).collect();
        let run = |workers: usize| {
            let schedule = build_schedule(50, ScheduleKind::Linear).unwrap();
            let cfg = DenoiserConfig {
                latent_count: 2,
                channels: 4,
                d_model: 8,
                layers: 3,
                heads: 2,
                pe_dim: 4,
            };
            let mut dm = DiffusionModel::new(cfg, schedule, 5);
            let tc = DiffusionTrainConfig {
                epochs: 2,
                batch_size: 3,
                workers,
                ..Default::default()
            };
            train_diffusion(&mut dm, &quads, &tc, |_| {}).unwrap();
            let id = dm.params.id("denoise.in.w").unwrap();
            dm.params.tensor(id).clone()
        };
        assert_eq!(run(1), run(2));
    }

    #[test]
    fn latent_stats_standardize() {
        let mut rng = Rng::new(99);
        let quads: Vec<QuadLatent> =
            (0..10).map(|_| QuadLatent::noise(2, 4, &mut rng).map(|v| v * 3.0 + 1.0)).collect();
        let (mean, std) = latent_stats(&quads);
        assert!((mean - 1.0).abs() < 0.2, "mean {mean}");
        assert!((std - 3.0).abs() < 0.3, "std {std}");
    }
}

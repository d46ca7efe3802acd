//! Reverse-process samplers: explicit masked-conditioning outpainting and
//! the RePaint resampling baseline. Both run on frozen parameters and are
//! safe to call concurrently for independent quads.

use crate::error::Result;
use crate::nn::ParamStore;
use crate::rng::Rng;

use super::denoiser::DenoiserModel;
use super::{DiffusionSchedule, MaskConfig, QuadLatent};

/// Produces all four denoised slots for one quad. Implementations count
/// their denoiser evaluations.
pub trait QuadSampler: Sync {
    /// `context` carries the clean latents for conditioned slots (unknown
    /// slots are ignored per the mask template). Returns the full quad and
    /// the number of denoiser calls spent.
    fn sample_quad(
        &self,
        cfg: MaskConfig,
        context: &QuadLatent,
        seed: u64,
    ) -> Result<(QuadLatent, usize)>;

    fn latent_count(&self) -> usize;
    fn channels(&self) -> usize;
}

/// A denoiser evaluation source: the trained transformer in production,
/// cheap mocks and analytic oracles in tests.
pub trait EpsModel: Sync {
    fn predict(
        &self,
        x_t: &QuadLatent,
        cfg: MaskConfig,
        context: &QuadLatent,
        t: usize,
    ) -> Result<QuadLatent>;
}

pub struct TrainedEps<'a> {
    pub model: &'a DenoiserModel,
    pub params: &'a ParamStore<f32>,
}

impl EpsModel for TrainedEps<'_> {
    fn predict(
        &self,
        x_t: &QuadLatent,
        cfg: MaskConfig,
        context: &QuadLatent,
        t: usize,
    ) -> Result<QuadLatent> {
        self.model.predict_eps(self.params, x_t, cfg, context, t)
    }
}

/// One ancestral reverse step from `t_cur` to `t_prev` with variance
/// 1 - alpha_bar(t_cur)/alpha_bar(t_prev); no noise when t_prev = 0.
fn reverse_step(
    x: &QuadLatent,
    eps_hat: &QuadLatent,
    schedule: &DiffusionSchedule,
    t_cur: usize,
    t_prev: usize,
    rng: &mut Rng,
) -> QuadLatent {
    let ab_cur = schedule.alpha_bar(t_cur);
    let ab_prev = schedule.alpha_bar(t_prev);
    let alpha_eff = ab_cur / ab_prev;
    let beta_eff = 1.0 - alpha_eff;
    let coef = beta_eff / (1.0 - ab_cur).sqrt();
    let inv_sqrt_alpha = 1.0 / alpha_eff.sqrt();
    let sigma = if t_prev == 0 { 0.0 } else { beta_eff.sqrt() };
    let mut out = x.clone();
    for (o, (&xv, &ev)) in out
        .x
        .data_mut()
        .iter_mut()
        .zip(x.x.data().iter().zip(eps_hat.x.data()))
    {
        let mean = (xv as f64 - coef * ev as f64) * inv_sqrt_alpha;
        let noise = if sigma > 0.0 { sigma * rng.next_normal() } else { 0.0 };
        *o = (mean + noise) as f32;
    }
    out
}

/// Ancestral DDPM sampling over a strided timestep subsequence with the
/// condition fixed throughout. Returns the denoised quad and the exact
/// denoiser call count (= steps).
pub fn ddpm_sample(
    eps_model: &dyn EpsModel,
    schedule: &DiffusionSchedule,
    cfg: MaskConfig,
    context: &QuadLatent,
    steps: usize,
    seed: u64,
) -> Result<(QuadLatent, usize)> {
    let ts = schedule.strided_timesteps(steps)?;
    let mut rng = Rng::new(Rng::derive(seed, &[0xDD9]));
    let v = context.latent_count;
    let c = context.channels();
    let mut x = QuadLatent::noise(v, c, &mut rng);
    let mut calls = 0usize;
    for (k, &t_cur) in ts.iter().enumerate() {
        let t_prev = if k + 1 < ts.len() { ts[k + 1] } else { 0 };
        let eps_hat = eps_model.predict(&x, cfg, context, t_cur)?;
        calls += 1;
        x = reverse_step(&x, &eps_hat, schedule, t_cur, t_prev, &mut rng);
    }
    Ok((x, calls))
}

/// RePaint with jump length 1: the condition is the all-zero Full pattern;
/// known slots are injected at every visit by forward-noising the known
/// latents, each timestep repeats `resample_r` times with one re-noising
/// between repeats (the final step cannot re-noise), and known slots are
/// restored exactly at t = 0.
pub fn repaint_sample(
    eps_model: &dyn EpsModel,
    schedule: &DiffusionSchedule,
    known_slots: [bool; 4],
    known: &QuadLatent,
    resample_r: usize,
    steps: usize,
    seed: u64,
) -> Result<(QuadLatent, usize)> {
    assert!(resample_r >= 1);
    let ts = schedule.strided_timesteps(steps)?;
    let mut rng = Rng::new(Rng::derive(seed, &[0x9E9A]));
    let v = known.latent_count;
    let c = known.channels();
    let zero_context = QuadLatent::zeros(v, c);
    let mut x = QuadLatent::noise(v, c, &mut rng);
    let mut calls = 0usize;
    for (k, &t_cur) in ts.iter().enumerate() {
        let t_prev = if k + 1 < ts.len() { ts[k + 1] } else { 0 };
        let is_final = t_prev == 0;
        let repeats = if is_final { 1 } else { resample_r };
        let alpha_eff = schedule.alpha_bar(t_cur) / schedule.alpha_bar(t_prev);
        for rep in 0..repeats {
            // inject known content at the current noise level
            let ab = schedule.alpha_bar(t_cur);
            let (sa, sb) = (ab.sqrt(), (1.0 - ab).sqrt());
            for (s, &is_known) in known_slots.iter().enumerate() {
                if !is_known {
                    continue;
                }
                let mut noised = known.slot(s).z;
                for val in noised.data_mut() {
                    *val = (sa * *val as f64 + sb * rng.next_normal()) as f32;
                }
                x.set_slot(s, &noised);
            }
            let eps_hat = eps_model.predict(&x, MaskConfig::Full, &zero_context, t_cur)?;
            calls += 1;
            x = reverse_step(&x, &eps_hat, schedule, t_cur, t_prev, &mut rng);
            if rep + 1 < repeats {
                // one forward re-noising back to t_cur
                let (ra, rb) = (alpha_eff.sqrt(), (1.0 - alpha_eff).sqrt());
                for val in x.x.data_mut() {
                    *val = (ra * *val as f64 + rb * rng.next_normal()) as f32;
                }
            }
        }
    }
    // final replacement: known slots equal the provided latents exactly
    for (s, &is_known) in known_slots.iter().enumerate() {
        if is_known {
            x.set_slot(s, &known.slot(s).z);
        }
    }
    Ok((x, calls))
}

/// Generation method selector shared by the CLI and the scene generator.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum OutpaintMethod {
    Explicit,
    Repaint { resample_r: usize },
}

impl OutpaintMethod {
    pub fn name(&self) -> String {
        match self {
            OutpaintMethod::Explicit => "explicit".to_string(),
            OutpaintMethod::Repaint { resample_r } => format!("repaint(r={resample_r})"),
        }
    }
}

/// Sampler over a trained (or mock) eps model.
pub struct DiffusionSampler<'a> {
    pub eps: &'a dyn EpsModel,
    pub schedule: &'a DiffusionSchedule,
    pub steps: usize,
    pub method: OutpaintMethod,
    pub latent_count: usize,
    pub channels: usize,
}

impl QuadSampler for DiffusionSampler<'_> {
    fn sample_quad(
        &self,
        cfg: MaskConfig,
        context: &QuadLatent,
        seed: u64,
    ) -> Result<(QuadLatent, usize)> {
        match self.method {
            OutpaintMethod::Explicit => {
                ddpm_sample(self.eps, self.schedule, cfg, context, self.steps, seed)
            }
            OutpaintMethod::Repaint { resample_r } => repaint_sample(
                self.eps,
                self.schedule,
                cfg.known_slots(),
                context,
                resample_r,
                self.steps,
                seed,
            ),
        }
    }

    fn latent_count(&self) -> usize {
        self.latent_count
    }

    fn channels(&self) -> usize {
        self.channels
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::{build_schedule, ScheduleKind};
    use std::sync::atomic::{AtomicUsize, Ordering};

    /// Analytic oracle: eps = (x_t - sqrt(ab_t) x0) / sqrt(1 - ab_t).
    struct OracleEps {
        x0: QuadLatent,
        schedule: DiffusionSchedule,
    }

    impl EpsModel for OracleEps {
        fn predict(
            &self,
            x_t: &QuadLatent,
            _cfg: MaskConfig,
            _context: &QuadLatent,
            t: usize,
        ) -> Result<QuadLatent> {
            let ab = self.schedule.alpha_bar(t);
            let (sa, sb) = (ab.sqrt(), (1.0 - ab).sqrt());
            let data = x_t
                .x
                .data()
                .iter()
                .zip(self.x0.x.data())
                .map(|(&xt, &x0)| ((xt as f64 - sa * x0 as f64) / sb) as f32)
                .collect();
            Ok(QuadLatent {
                x: crate::nn::Tensor::new(x_t.x.shape().to_vec(), data).unwrap(),
                latent_count: x_t.latent_count,
            })
        }
    }

    struct CountingEps(AtomicUsize);

    impl EpsModel for CountingEps {
        fn predict(
            &self,
            x_t: &QuadLatent,
            _cfg: MaskConfig,
            _context: &QuadLatent,
            _t: usize,
        ) -> Result<QuadLatent> {
            self.0.fetch_add(1, Ordering::Relaxed);
            Ok(x_t.map(|v| v * 0.5))
        }
    }

    #[test]
    fn oracle_denoiser_reconstructs_x0() {
        let schedule = build_schedule(200, ScheduleKind::Linear).unwrap();
        let mut rng = Rng::new(90);
        let x0 = QuadLatent::noise(4, 8, &mut rng);
        let oracle = OracleEps { x0: x0.clone(), schedule: schedule.clone() };
        let context = QuadLatent::zeros(4, 8);
        let (out, calls) =
            ddpm_sample(&oracle, &schedule, MaskConfig::Full, &context, 200, 55).unwrap();
        assert_eq!(calls, 200);
        let rms = (out
            .x
            .data()
            .iter()
            .zip(x0.x.data())
            .map(|(&a, &b)| ((a - b) as f64).powi(2))
            .sum::<f64>()
            / out.x.len() as f64)
            .sqrt();
        assert!(rms <= 1e-2, "oracle reconstruction rms {rms}");
    }

    #[test]
    fn call_counts_match_formulas() {
        let schedule = build_schedule(100, ScheduleKind::Linear).unwrap();
        let context = QuadLatent::zeros(2, 4);
        let counting = CountingEps(AtomicUsize::new(0));
        let (_, calls) =
            ddpm_sample(&counting, &schedule, MaskConfig::Diagonal, &context, 50, 1).unwrap();
        assert_eq!(calls, 50);
        assert_eq!(counting.0.load(Ordering::Relaxed), 50);

        for (r, want) in [(1usize, 50usize), (5, 246)] {
            let counting = CountingEps(AtomicUsize::new(0));
            let (_, calls) = repaint_sample(
                &counting,
                &schedule,
                [true, false, true, false],
                &context,
                r,
                50,
                2,
            )
            .unwrap();
            assert_eq!(calls, want, "repaint r={r}");
            assert_eq!(counting.0.load(Ordering::Relaxed), want);
        }
    }

    #[test]
    fn repaint_restores_known_slots_exactly() {
        let schedule = build_schedule(60, ScheduleKind::Linear).unwrap();
        let mut rng = Rng::new(91);
        let known = QuadLatent::noise(2, 4, &mut rng);
        let counting = CountingEps(AtomicUsize::new(0));
        let (out, _) =
            repaint_sample(&counting, &schedule, [true, true, false, false], &known, 3, 20, 7)
                .unwrap();
        assert_eq!(out.slot(0).z, known.slot(0).z);
        assert_eq!(out.slot(1).z, known.slot(1).z);
        assert_ne!(out.slot(2).z, known.slot(2).z);
    }

    #[test]
    fn sampling_is_deterministic_per_seed() {
        let schedule = build_schedule(50, ScheduleKind::Linear).unwrap();
        let context = QuadLatent::zeros(2, 4);
        let counting = CountingEps(AtomicUsize::new(0));
        let (a, _) = ddpm_sample(&counting, &schedule, MaskConfig::Full, &context, 25, 99).unwrap();
        let (b, _) = ddpm_sample(&counting, &schedule, MaskConfig::Full, &context, 25, 99).unwrap();
        let (c, _) = ddpm_sample(&counting, &schedule, MaskConfig::Full, &context, 25, 98).unwrap();
        assert_eq!(a.x, b.x);
        assert_ne!(a.x, c.x);
    }

    #[test]
    fn steps_beyond_t_rejected() {
        let schedule = build_schedule(10, ScheduleKind::Linear).unwrap();
        let context = QuadLatent::zeros(2, 4);
        let counting = CountingEps(AtomicUsize::new(0));
        assert!(ddpm_sample(&counting, &schedule, MaskConfig::Full, &context, 11, 1).is_err());
    }
}

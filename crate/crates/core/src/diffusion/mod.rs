//! Masked-conditioning DDPM over 2x2 quads of chunk latents.
//!
//! A quad stacks four latent sets (slot order z0 top-left, z1 top-right,
//! z2 bottom-left, z3 bottom-right). Training noises all four slots and
//! the denoiser receives the condition C = mask | conditioned latents |
//! learned slot embedding concatenated per token.

pub mod denoiser;
pub mod sample;
pub mod train;

use crate::error::{Error, Result};
use crate::nn::Tensor;
use crate::rng::Rng;
use crate::vae::LatentSet;

/// Forward-process constants. Betas are linear by default; `alpha_bar(t)`
/// is the cumulative product with `alpha_bar(0) = 1`.
#[derive(Clone, Debug)]
pub struct DiffusionSchedule {
    pub t_max: usize,
    pub betas: Vec<f64>,
    pub alphas: Vec<f64>,
    pub alpha_bars: Vec<f64>,
    pub inference_steps: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum ScheduleKind {
    Linear,
}

pub fn build_schedule(t_max: usize, kind: ScheduleKind) -> Result<DiffusionSchedule> {
    if t_max == 0 {
        return Err(Error::invalid("schedule needs at least one step"));
    }
    let betas: Vec<f64> = match kind {
        ScheduleKind::Linear => {
            let (lo, hi) = (1e-4, 2e-2);
            (0..t_max)
                .map(|i| {
                    if t_max == 1 {
                        lo
                    } else {
                        lo + (hi - lo) * i as f64 / (t_max - 1) as f64
                    }
                })
                .collect()
        }
    };
    let alphas: Vec<f64> = betas.iter().map(|b| 1.0 - b).collect();
    let mut alpha_bars = Vec::with_capacity(t_max);
    let mut prod = 1.0;
    for &a in &alphas {
        prod *= a;
        alpha_bars.push(prod);
    }
    Ok(DiffusionSchedule { t_max, betas, alphas, alpha_bars, inference_steps: 50 })
}

impl DiffusionSchedule {
    /// Cumulative alpha with the t = 0 convention.
    pub fn alpha_bar(&self, t: usize) -> f64 {
        if t == 0 {
            1.0
        } else {
            self.alpha_bars[t - 1]
        }
    }

    /// Uniformly strided descending timestep subsequence of length `steps`.
    pub fn strided_timesteps(&self, steps: usize) -> Result<Vec<usize>> {
        if steps == 0 || steps > self.t_max {
            return Err(Error::invalid(format!(
                "inference steps {steps} must lie in [1, {}]",
                self.t_max
            )));
        }
        // ascending i*T/S for i in 1..=S, returned descending
        let mut ts: Vec<usize> = (1..=steps).map(|i| i * self.t_max / steps).collect();
        ts.reverse();
        Ok(ts)
    }
}

/// The four conditioning patterns and their quad positions in the raster
/// scan (first quad, first row, first column, interior).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum MaskConfig {
    Full,
    LeftRight,
    TopDown,
    Diagonal,
}

impl MaskConfig {
    pub const ALL: [MaskConfig; 4] =
        [MaskConfig::Full, MaskConfig::LeftRight, MaskConfig::TopDown, MaskConfig::Diagonal];

    /// Which slots carry known context: Full {}, LeftRight {z0, z2},
    /// TopDown {z0, z1}, Diagonal {z0, z1, z2}.
    pub fn known_slots(self) -> [bool; 4] {
        match self {
            MaskConfig::Full => [false, false, false, false],
            MaskConfig::LeftRight => [true, false, true, false],
            MaskConfig::TopDown => [true, true, false, false],
            MaskConfig::Diagonal => [true, true, true, false],
        }
    }

    /// Raster-scan position rule: (0,0) Full; first row LeftRight; first
    /// column TopDown; otherwise Diagonal.
    pub fn for_position(i: usize, j: usize) -> MaskConfig {
        match (i, j) {
            (0, 0) => MaskConfig::Full,
            (0, _) => MaskConfig::LeftRight,
            (_, 0) => MaskConfig::TopDown,
            _ => MaskConfig::Diagonal,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            MaskConfig::Full => "full",
            MaskConfig::LeftRight => "left-right",
            MaskConfig::TopDown => "top-down",
            MaskConfig::Diagonal => "diagonal",
        }
    }
}

impl std::str::FromStr for MaskConfig {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(MaskConfig::Full),
            "left-right" => Ok(MaskConfig::LeftRight),
            "top-down" => Ok(MaskConfig::TopDown),
            "diagonal" => Ok(MaskConfig::Diagonal),
            other => Err(Error::invalid(format!("unknown mask config {other:?}"))),
        }
    }
}

/// 4 x V x c latent block flattened to (4V) x c, slot s in rows
/// [s*V, (s+1)*V).
#[derive(Clone, Debug, PartialEq)]
pub struct QuadLatent {
    pub x: Tensor<f32>,
    pub latent_count: usize,
}

impl QuadLatent {
    pub fn from_slots(slots: [&LatentSet; 4]) -> Result<QuadLatent> {
        let v = slots[0].latent_count();
        let c = slots[0].channels();
        for s in &slots {
            if s.latent_count() != v || s.channels() != c {
                return Err(Error::shape("quad slots disagree on V x c"));
            }
        }
        let mut data = Vec::with_capacity(4 * v * c);
        for s in &slots {
            data.extend_from_slice(s.z.data());
        }
        Ok(QuadLatent { x: Tensor::new(vec![4 * v, c], data)?, latent_count: v })
    }

    pub fn zeros(v: usize, c: usize) -> QuadLatent {
        QuadLatent { x: Tensor::zeros(vec![4 * v, c]), latent_count: v }
    }

    pub fn noise(v: usize, c: usize, rng: &mut Rng) -> QuadLatent {
        QuadLatent { x: Tensor::randn(vec![4 * v, c], 1.0, rng), latent_count: v }
    }

    pub fn channels(&self) -> usize {
        self.x.cols()
    }

    pub fn slot(&self, s: usize) -> LatentSet {
        assert!(s < 4);
        let v = self.latent_count;
        let c = self.channels();
        let data = self.x.data()[s * v * c..(s + 1) * v * c].to_vec();
        LatentSet { z: Tensor::new(vec![v, c], data).unwrap(), moments: None }
    }

    pub fn set_slot(&mut self, s: usize, latent: &Tensor<f32>) {
        let v = self.latent_count;
        let c = self.channels();
        assert_eq!(latent.shape(), &[v, c], "slot shape");
        self.x.data_mut()[s * v * c..(s + 1) * v * c].copy_from_slice(latent.data());
    }

    pub fn map(&self, f: impl Fn(f32) -> f32) -> QuadLatent {
        QuadLatent { x: self.x.map(f), latent_count: self.latent_count }
    }
}

/// x_t = sqrt(alpha_bar_t) * x0 + sqrt(1 - alpha_bar_t) * eps.
pub fn q_sample(x0: &QuadLatent, schedule: &DiffusionSchedule, t: usize, eps: &QuadLatent) -> QuadLatent {
    assert!(t >= 1 && t <= schedule.t_max, "timestep {t} outside [1, T]");
    assert_eq!(x0.x.shape(), eps.x.shape());
    let ab = schedule.alpha_bar(t);
    let (sa, sb) = (ab.sqrt() as f32, (1.0 - ab).sqrt() as f32);
    let data = x0
        .x
        .data()
        .iter()
        .zip(eps.x.data())
        .map(|(&x, &e)| sa * x + sb * e)
        .collect();
    QuadLatent {
        x: Tensor::new(x0.x.shape().to_vec(), data).unwrap(),
        latent_count: x0.latent_count,
    }
}

/// Mask and conditioned-latent channels of the condition, per token:
/// column 0 the binary mask, columns 1..=c the clean latent for known
/// slots (zeroed for unknown). The learned slot embedding concatenates
/// inside the denoiser.
pub fn build_condition(cfg: MaskConfig, clean: &QuadLatent) -> Tensor<f32> {
    let v = clean.latent_count;
    let c = clean.channels();
    let known = cfg.known_slots();
    let mut out = Tensor::zeros(vec![4 * v, 1 + c]);
    for s in 0..4 {
        for row in 0..v {
            let token = s * v + row;
            if known[s] {
                out.data_mut()[token * (1 + c)] = 1.0;
                for ch in 0..c {
                    out.data_mut()[token * (1 + c) + 1 + ch] = clean.x.data()[token * c + ch];
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_invariants() {
        let s = build_schedule(1000, ScheduleKind::Linear).unwrap();
        assert!(s.betas.iter().all(|&b| b > 0.0 && b < 1.0));
        for w in s.alpha_bars.windows(2) {
            assert!(w[1] < w[0], "alpha_bar must strictly decrease");
        }
        assert!((s.alpha_bar(0) - 1.0).abs() < 1e-12);
        assert!(s.alpha_bar(1) > 0.999, "alpha_bar(1) ~ 1");
        assert!(s.alpha_bar(1000) < 0.01, "alpha_bar(T) < 0.01 for T=1000");
        let one = build_schedule(1, ScheduleKind::Linear).unwrap();
        assert!((one.alpha_bar(1) - (1.0 - one.betas[0])).abs() < 1e-15);
    }

    #[test]
    fn strided_timesteps_cover_t_and_reduce_to_full() {
        let s = build_schedule(200, ScheduleKind::Linear).unwrap();
        let full = s.strided_timesteps(200).unwrap();
        assert_eq!(full.len(), 200);
        assert_eq!(full[0], 200);
        assert_eq!(*full.last().unwrap(), 1);
        let strided = s.strided_timesteps(50).unwrap();
        assert_eq!(strided.len(), 50);
        assert_eq!(strided[0], 200);
        assert!(s.strided_timesteps(201).is_err());
        assert!(s.strided_timesteps(0).is_err());
    }

    #[test]
    fn q_sample_endpoints() {
        let mut rng = Rng::new(70);
        let x0 = QuadLatent::noise(2, 4, &mut rng);
        let eps = QuadLatent::noise(2, 4, &mut rng);
        let s = build_schedule(100, ScheduleKind::Linear).unwrap();
        // t=1: alpha_bar ~ 1 -> x_t ~ x0
        let x1 = q_sample(&x0, &s, 1, &eps);
        for (a, b) in x1.x.data().iter().zip(x0.x.data()) {
            assert!((a - b).abs() < 0.02);
        }
    }

    #[test]
    fn q_sample_preserves_unit_variance() {
        let mut rng = Rng::new(71);
        let s = build_schedule(100, ScheduleKind::Linear).unwrap();
        let mut sum_sq = 0.0f64;
        let mut n = 0usize;
        for _ in 0..100 {
            let x0 = QuadLatent::noise(4, 16, &mut rng);
            let eps = QuadLatent::noise(4, 16, &mut rng);
            let t = 1 + rng.below(100);
            let xt = q_sample(&x0, &s, t, &eps);
            for &v in xt.x.data() {
                sum_sq += (v as f64) * (v as f64);
                n += 1;
            }
        }
        let var = sum_sq / n as f64;
        assert!((var - 1.0).abs() < 0.05, "variance {var}");
    }

    #[test]
    fn mask_templates_match_condition_slots() {
        let mut rng = Rng::new(72);
        let (v, c) = (3usize, 5usize);
        let clean = QuadLatent::noise(v, c, &mut rng);
        for cfg in MaskConfig::ALL {
            let cond = build_condition(cfg, &clean);
            assert_eq!(cond.shape(), &[4 * v, 1 + c]);
            let known = cfg.known_slots();
            for s in 0..4 {
                for row in 0..v {
                    let token = s * v + row;
                    let mask_bit = cond.data()[token * (1 + c)];
                    assert_eq!(mask_bit, if known[s] { 1.0 } else { 0.0 });
                    for ch in 0..c {
                        let got = cond.data()[token * (1 + c) + 1 + ch];
                        let want = if known[s] { clean.x.data()[token * c + ch] } else { 0.0 };
                        assert_eq!(got, want, "mask 0 must zero the condition slot");
                    }
                }
            }
        }
        // the four templates
        assert_eq!(MaskConfig::Full.known_slots(), [false; 4]);
        assert_eq!(MaskConfig::LeftRight.known_slots(), [true, false, true, false]);
        assert_eq!(MaskConfig::TopDown.known_slots(), [true, true, false, false]);
        assert_eq!(MaskConfig::Diagonal.known_slots(), [true, true, true, false]);
    }

    #[test]
    fn quad_slot_roundtrip() {
        let mut rng = Rng::new(73);
        let slots: Vec<LatentSet> = (0..4)
            .map(|_| LatentSet::new(Tensor::randn(vec![3, 5], 1.0, &mut rng)).unwrap())
            .collect();
        let quad = QuadLatent::from_slots([&slots[0], &slots[1], &slots[2], &slots[3]]).unwrap();
        for s in 0..4 {
            assert_eq!(quad.slot(s).z, slots[s].z);
        }
    }
}

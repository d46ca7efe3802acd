//! UNet-style transformer denoiser over the 4V quad tokens: down blocks
//! push activations onto a skip stack, up blocks concatenate them back
//! through a projection, and a sinusoidal timestep embedding adds to every
//! token.

use crate::error::Result;
use crate::nn::layers::{timestep_embedding, LayerNormLayer, LinearLayer, TransformerBlock};
use crate::nn::{ParamId, ParamStore, Scalar, Session, Tensor, Var};
use crate::rng::Rng;

use super::{build_condition, MaskConfig, QuadLatent};

#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct DenoiserConfig {
    /// Latents per quad slot (V); tokens per quad = 4V.
    pub latent_count: usize,
    /// Latent channels (c).
    pub channels: usize,
    /// Transformer width.
    pub d_model: usize,
    /// Total blocks; split into down / mid / up with long skips.
    pub layers: usize,
    pub heads: usize,
    /// Width of the learned per-token slot embedding in the condition.
    pub pe_dim: usize,
}

impl Default for DenoiserConfig {
    fn default() -> Self {
        DenoiserConfig {
            latent_count: 8,
            channels: 32,
            d_model: 64,
            layers: 7,
            heads: 4,
            pe_dim: 16,
        }
    }
}

impl DenoiserConfig {
    pub fn tokens(&self) -> usize {
        4 * self.latent_count
    }

    /// Channel width of the condition C per token: mask (1) + clean latent
    /// (c) + learned position embedding (pe_dim).
    pub fn condition_width(&self) -> usize {
        1 + self.channels + self.pe_dim
    }

    pub fn input_width(&self) -> usize {
        self.channels + self.condition_width()
    }
}

#[derive(Clone)]
pub struct DenoiserModel {
    pub cfg: DenoiserConfig,
    position_embedding: ParamId,
    in_proj: LinearLayer,
    time_fc1: LinearLayer,
    time_fc2: LinearLayer,
    down: Vec<TransformerBlock>,
    mid: Option<TransformerBlock>,
    up: Vec<(LinearLayer, TransformerBlock)>,
    out_norm: LayerNormLayer,
    out_proj: LinearLayer,
}

impl DenoiserModel {
    pub fn init<T: Scalar>(store: &mut ParamStore<T>, cfg: DenoiserConfig, rng: &mut Rng) -> Self {
        let d = cfg.d_model;
        let position_embedding =
            store.add("denoise.pe", Tensor::randn(vec![cfg.tokens(), cfg.pe_dim], 0.2, rng));
        let in_proj = LinearLayer::init(store, "denoise.in", cfg.input_width(), d, rng);
        let time_fc1 = LinearLayer::init(store, "denoise.time1", d, d, rng);
        let time_fc2 = LinearLayer::init(store, "denoise.time2", d, d, rng);
        let n_down = cfg.layers / 2;
        let has_mid = cfg.layers % 2 == 1;
        let down = (0..n_down)
            .map(|i| TransformerBlock::init(store, &format!("denoise.down{i}"), d, cfg.heads, rng))
            .collect();
        let mid = has_mid
            .then(|| TransformerBlock::init(store, "denoise.mid", d, cfg.heads, rng));
        let up = (0..n_down)
            .map(|i| {
                (
                    LinearLayer::init(store, &format!("denoise.up{i}.skip"), 2 * d, d, rng),
                    TransformerBlock::init(store, &format!("denoise.up{i}.blk"), d, cfg.heads, rng),
                )
            })
            .collect();
        let out_norm = LayerNormLayer::init(store, "denoise.out_norm", d);
        // zero-initialized output keeps early denoiser steps well-behaved
        let out_proj = LinearLayer::init_zero(store, "denoise.out", d, cfg.channels);
        DenoiserModel {
            cfg,
            position_embedding,
            in_proj,
            time_fc1,
            time_fc2,
            down,
            mid,
            up,
            out_norm,
            out_proj,
        }
    }

    /// Records the denoiser forward pass: eps_hat(x_t | C, t).
    /// `mask_zcond` is the [4V, 1+c] tensor from `build_condition`.
    pub fn forward_graph<T: Scalar>(
        &self,
        sess: &mut Session<T>,
        x_t: Var,
        mask_zcond: &Tensor<T>,
        t: usize,
    ) -> Result<Var> {
        let tokens = self.cfg.tokens();
        assert_eq!(sess.graph.shape(x_t), &[tokens, self.cfg.channels], "x_t shape");
        assert_eq!(mask_zcond.shape(), &[tokens, 1 + self.cfg.channels], "condition shape");
        let cond = sess.constant(mask_zcond.clone());
        let pe = sess.param(self.position_embedding);
        let stacked = sess.graph.concat_cols(&[x_t, cond, pe]);
        let mut h = self.in_proj.forward(sess, stacked);

        let t_embed = sess.constant(timestep_embedding::<T>(t, self.cfg.d_model));
        let t_h = self.time_fc1.forward(sess, t_embed);
        let t_h = sess.graph.gelu(t_h);
        let t_h = self.time_fc2.forward(sess, t_h);
        // broadcast the [1, d] embedding over tokens
        let t_bias = sess.graph.reshape(t_h, vec![self.cfg.d_model]);
        h = sess.graph.add_bias(h, t_bias);

        let mut skips = Vec::with_capacity(self.down.len());
        for blk in &self.down {
            h = blk.forward(sess, h);
            skips.push(h);
        }
        if let Some(mid) = &self.mid {
            h = mid.forward(sess, h);
        }
        for (proj, blk) in &self.up {
            let skip = skips.pop().expect("skip stack");
            let cat = sess.graph.concat_cols(&[h, skip]);
            h = proj.forward(sess, cat);
            h = blk.forward(sess, h);
        }
        let h = self.out_norm.forward(sess, h);
        Ok(self.out_proj.forward(sess, h))
    }

    /// One inference evaluation on frozen parameters.
    pub fn predict_eps<T: Scalar>(
        &self,
        params: &ParamStore<T>,
        x_t: &QuadLatent,
        cfg_mask: MaskConfig,
        clean: &QuadLatent,
        t: usize,
    ) -> Result<QuadLatent> {
        let cond32 = build_condition(cfg_mask, clean);
        let cond = Tensor::<T>::from_f64_tensor(&cond32.to_f64_tensor());
        let mut sess = Session::new(params);
        let x = sess.constant(Tensor::from_f64_tensor(&x_t.x.to_f64_tensor()));
        let eps = self.forward_graph(&mut sess, x, &cond, t)?;
        let out64 = sess.value(eps).to_f64_tensor();
        Ok(QuadLatent {
            x: Tensor::from_f64_tensor(&out64),
            latent_count: x_t.latent_count,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn micro() -> (DenoiserModel, ParamStore<f64>) {
        let mut store = ParamStore::new();
        let cfg = DenoiserConfig {
            latent_count: 2,
            channels: 4,
            d_model: 8,
            layers: 3,
            heads: 2,
            pe_dim: 4,
        };
        let model = DenoiserModel::init(&mut store, cfg, &mut Rng::new(80));
        (model, store)
    }

    #[test]
    fn output_shape_matches_input_and_is_deterministic() {
        let (model, store) = micro();
        let mut rng = Rng::new(81);
        let x = QuadLatent::noise(2, 4, &mut rng);
        let clean = QuadLatent::noise(2, 4, &mut rng);
        let a = model.predict_eps(&store, &x, MaskConfig::Diagonal, &clean, 5).unwrap();
        let b = model.predict_eps(&store, &x, MaskConfig::Diagonal, &clean, 5).unwrap();
        assert_eq!(a.x.shape(), &[8, 4]);
        assert_eq!(a.x, b.x);
    }

    #[test]
    fn condition_width_arithmetic() {
        let cfg = DenoiserConfig::default();
        assert_eq!(cfg.condition_width(), 1 + 32 + 16);
        assert_eq!(cfg.tokens(), 32);
        assert_eq!(cfg.input_width(), 32 + 49);
    }

    #[test]
    fn timestep_changes_output() {
        let (model, mut store) = micro();
        let mut rng = Rng::new(82);
        let out_w = store.id("denoise.out.w").unwrap();
        *store.tensor_mut(out_w) = Tensor::randn(vec![8, 4], 0.4, &mut rng);
        let x = QuadLatent::noise(2, 4, &mut rng);
        let clean = QuadLatent::zeros(2, 4);
        let a = model.predict_eps(&store, &x, MaskConfig::Full, &clean, 1).unwrap();
        let b = model.predict_eps(&store, &x, MaskConfig::Full, &clean, 90).unwrap();
        let diff: f64 = a
            .x
            .data()
            .iter()
            .zip(b.x.data())
            .map(|(&p, &q)| ((p - q) as f64).abs())
            .sum();
        assert!(diff > 1e-9, "timestep embedding had no effect");
    }

    #[test]
    fn denoiser_gradcheck_micro() {
        let (model, mut store) = micro();
        let mut rng = Rng::new(83);
        // the output projection starts at zero, which would zero every
        // upstream gradient; randomize it so the check exercises all layers
        let out_w = store.id("denoise.out.w").unwrap();
        *store.tensor_mut(out_w) = Tensor::randn(vec![8, 4], 0.4, &mut rng);
        let x = Tensor::<f64>::randn(vec![8, 4], 1.0, &mut rng);
        let clean = QuadLatent::noise(2, 4, &mut rng);
        let cond32 = build_condition(MaskConfig::TopDown, &clean);
        let cond = Tensor::<f64>::from_f64_tensor(&cond32.to_f64_tensor());
        let target = Tensor::<f64>::randn(vec![8, 4], 1.0, &mut rng);
        let report = crate::nn::gradcheck::check_gradients(
            &mut store,
            |sess| {
                let xv = sess.constant(x.clone());
                let eps = model.forward_graph(sess, xv, &cond, 7).unwrap();
                let tv = sess.constant(target.clone());
                sess.graph.mse(eps, tv)
            },
            1e-4,
            4,
        );
        assert!(report.max_rel_err <= 1e-3, "{report:?}");
    }
}

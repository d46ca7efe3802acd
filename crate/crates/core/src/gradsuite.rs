//! Finite-difference verification of every differentiable kernel plus the
//! composed VAE, triplane, and denoiser micro-configurations. Backing for
//! the gradient acceptance criterion; each check runs in 64-bit with step
//! 1e-4 against the 1e-3 relative-error contract.

use crate::diffusion::denoiser::{DenoiserConfig, DenoiserModel};
use crate::diffusion::{build_condition, MaskConfig, QuadLatent};
use crate::nn::gradcheck::check_gradients;
use crate::nn::layers::{CrossAttentionLayer, LayerNormLayer, TransformerBlock};
use crate::nn::{ParamStore, Session, Tensor, Var};
use crate::rng::Rng;
use crate::vae::triplane::{bilinear_sample, deconv2x, plane_from_tokens, TriplaneConfig, TriplaneModel};
use crate::vae::{VaeConfig, VaeTrainItem, VecsetVae};

pub struct SuiteReport {
    pub lines: Vec<String>,
    pub worst_rel_err: f64,
    pub worst_name: String,
}

const STEP: f64 = 1e-4;

fn record(
    report: &mut SuiteReport,
    name: &str,
    store: &mut ParamStore<f64>,
    build: impl Fn(&mut Session<f64>) -> Var,
    probes: usize,
) {
    let r = check_gradients(store, build, STEP, probes);
    report.lines.push(format!(
        "{name}: rel err {:.2e} over {} probes ({})",
        r.max_rel_err, r.checked, r.worst_param
    ));
    if r.max_rel_err > report.worst_rel_err {
        report.worst_rel_err = r.max_rel_err;
        report.worst_name = name.to_string();
    }
}

/// Runs the whole suite; `worst_rel_err` must stay within 1e-3.
pub fn full_kernel_suite() -> SuiteReport {
    let mut report =
        SuiteReport { lines: Vec::new(), worst_rel_err: 0.0, worst_name: String::new() };
    let mut rng = Rng::new(0xF00D);

    // -- elementwise and shape kernels on a shared parameter tensor --
    {
        let mut store = ParamStore::<f64>::new();
        store.add("x", Tensor::randn(vec![4, 6], 0.8, &mut rng));
        let id = store.id("x").unwrap();
        record(&mut report, "exp", &mut store, |s| {
            let x = s.param(id);
            let y = s.graph.exp(x);
            s.graph.mean_all(y)
        }, 12);
        record(&mut report, "gelu", &mut store, |s| {
            let x = s.param(id);
            let y = s.graph.gelu(x);
            let sq = s.graph.mul(y, y);
            s.graph.mean_all(sq)
        }, 12);
        record(&mut report, "relu", &mut store, |s| {
            let x = s.param(id);
            let y = s.graph.relu(x);
            let sq = s.graph.mul(y, y);
            s.graph.sum_all(sq)
        }, 12);
        record(&mut report, "scale-add-sub-mul", &mut store, |s| {
            let x = s.param(id);
            let a = s.graph.scale(x, 1.7);
            let b = s.graph.add_scalar(x, 0.3);
            let c = s.graph.sub(a, b);
            let d = s.graph.mul(c, x);
            let e = s.graph.add(d, x);
            s.graph.mean_all(e)
        }, 12);
        record(&mut report, "reshape-slice-concat", &mut store, |s| {
            let x = s.param(id);
            let r = s.graph.reshape(x, vec![6, 4]);
            let a = s.graph.slice_cols(r, 0, 2);
            let b = s.graph.slice_cols(r, 2, 2);
            let cat = s.graph.concat_cols(&[b, a]);
            let top = s.graph.slice_rows(cat, 0, 3);
            let bottom = s.graph.slice_rows(cat, 3, 3);
            let rows = s.graph.concat_rows(&[bottom, top]);
            let e = s.graph.exp(rows);
            s.graph.mean_all(e)
        }, 12);
    }

    // -- matmul / bias / losses --
    {
        let mut store = ParamStore::<f64>::new();
        store.add("a", Tensor::randn(vec![3, 4], 0.7, &mut rng));
        store.add("b", Tensor::randn(vec![4, 5], 0.7, &mut rng));
        store.add("bias", Tensor::randn(vec![5], 0.7, &mut rng));
        let (ia, ib, ibias) =
            (store.id("a").unwrap(), store.id("b").unwrap(), store.id("bias").unwrap());
        record(&mut report, "matmul+bias", &mut store, |s| {
            let a = s.param(ia);
            let b = s.param(ib);
            let bias = s.param(ibias);
            let y = s.graph.linear(a, b, bias);
            let sq = s.graph.mul(y, y);
            s.graph.mean_all(sq)
        }, 16);

        let labels = Tensor::new(vec![12], (0..12).map(|i| f64::from(i % 2 == 0)).collect()).unwrap();
        record(&mut report, "bce-with-logits", &mut store, move |s| {
            let a = s.param(ia);
            let r = s.graph.reshape(a, vec![12]);
            s.graph.bce_with_logits(r, &labels)
        }, 12);

        record(&mut report, "kl-normal", &mut store, |s| {
            let a = s.param(ia);
            let b = s.param(ib);
            let m = s.graph.slice_rows(a, 0, 3);
            let lv = s.graph.slice_cols(b, 0, 4);
            let lv = s.graph.slice_rows(lv, 0, 3);
            s.graph.kl_normal(m, lv)
        }, 16);
    }

    // -- attention / layer norm / blocks --
    {
        let mut store = ParamStore::<f64>::new();
        store.add("q", Tensor::randn(vec![3, 8], 0.8, &mut rng));
        store.add("k", Tensor::randn(vec![5, 8], 0.8, &mut rng));
        store.add("v", Tensor::randn(vec![5, 8], 0.8, &mut rng));
        let (iq, ik, iv) = (store.id("q").unwrap(), store.id("k").unwrap(), store.id("v").unwrap());
        record(&mut report, "attention", &mut store, |s| {
            let q = s.param(iq);
            let k = s.param(ik);
            let v = s.param(iv);
            let o = s.graph.attention(q, k, v, 2);
            let sq = s.graph.mul(o, o);
            s.graph.mean_all(sq)
        }, 16);
    }
    {
        let mut store = ParamStore::<f64>::new();
        let ln = LayerNormLayer::init(&mut store, "ln", 6);
        store.add("x", Tensor::randn(vec![4, 6], 1.1, &mut rng));
        let ix = store.id("x").unwrap();
        record(&mut report, "layer-norm", &mut store, move |s| {
            let x = s.param(ix);
            let y = ln.forward(s, x);
            let e = s.graph.gelu(y);
            s.graph.mean_all(e)
        }, 16);
    }
    {
        let mut store = ParamStore::<f64>::new();
        let blk = TransformerBlock::init(&mut store, "blk", 8, 2, &mut rng);
        let x = Tensor::randn(vec![4, 8], 0.8, &mut rng);
        record(&mut report, "transformer-block", &mut store, move |s| {
            let xv = s.constant(x.clone());
            let y = blk.forward(s, xv);
            let sq = s.graph.mul(y, y);
            s.graph.mean_all(sq)
        }, 10);
    }
    {
        let mut store = ParamStore::<f64>::new();
        let ca = CrossAttentionLayer::init(&mut store, "ca", 10, 6, 8, 4, &mut rng);
        let q = Tensor::randn(vec![3, 10], 0.8, &mut rng);
        let ctx = Tensor::randn(vec![5, 6], 0.8, &mut rng);
        record(&mut report, "cross-attention", &mut store, move |s| {
            let qv = s.constant(q.clone());
            let cv = s.constant(ctx.clone());
            let y = ca.forward(s, qv, cv).unwrap();
            let sq = s.graph.mul(y, y);
            s.graph.mean_all(sq)
        }, 10);
    }

    // -- triplane kernels --
    {
        let mut store = ParamStore::<f64>::new();
        store.add("tokens", Tensor::randn(vec![12, 4], 0.8, &mut rng));
        let it = store.id("tokens").unwrap();
        record(&mut report, "plane-from-tokens", &mut store, |s| {
            let t = s.param(it);
            let p0 = plane_from_tokens(&mut s.graph, t, 0, 2);
            let p2 = plane_from_tokens(&mut s.graph, t, 2, 2);
            let a = s.graph.mul(p0, p0);
            let b = s.graph.mul(p2, p2);
            let sum_a = s.graph.sum_all(a);
            let sum_b = s.graph.sum_all(b);
            s.graph.add(sum_a, sum_b)
        }, 16);
    }
    {
        let mut store = ParamStore::<f64>::new();
        store.add("x", Tensor::randn(vec![2, 3, 3], 0.8, &mut rng));
        store.add("w", Tensor::randn(vec![2, 3 * 16], 0.3, &mut rng));
        store.add("b", Tensor::randn(vec![3], 0.3, &mut rng));
        let (ix, iw, ib) = (store.id("x").unwrap(), store.id("w").unwrap(), store.id("b").unwrap());
        record(&mut report, "deconv2x", &mut store, |s| {
            let x = s.param(ix);
            let w = s.param(iw);
            let b = s.param(ib);
            let y = deconv2x(&mut s.graph, x, w, b);
            let sq = s.graph.mul(y, y);
            s.graph.mean_all(sq)
        }, 16);
    }
    {
        let mut store = ParamStore::<f64>::new();
        store.add("plane", Tensor::randn(vec![3, 4, 5], 0.8, &mut rng));
        let ip = store.id("plane").unwrap();
        let uv: Vec<[f64; 2]> = (0..10)
            .map(|_| [rng.next_f64() * 2.2 - 1.1, rng.next_f64() * 2.2 - 1.1])
            .collect();
        record(&mut report, "bilinear-sample", &mut store, move |s| {
            let p = s.param(ip);
            let y = bilinear_sample(&mut s.graph, p, &uv);
            let sq = s.graph.mul(y, y);
            s.graph.mean_all(sq)
        }, 16);
    }

    // -- composed VAE micro-config (V=2, c=8, L=1, 16 queries) --
    {
        let cfg = VaeConfig {
            latent_count: 2,
            channels: 8,
            n_points: 12,
            decoder_layers: 1,
            heads: 2,
            n_freq: 2,
            chunk_size: 8,
            ..Default::default()
        };
        let mut vae = VecsetVae::<f64>::new(cfg, 0xACE).unwrap();
        let item = micro_item(&mut rng, 12, 16);
        let model = vae.model.clone();
        record(&mut report, "vae-micro-loss", &mut vae.params, move |s| {
            let mut noise = Rng::new(0xFACE);
            let (loss, _) = model.loss_graph(s, &item, &mut noise).unwrap();
            loss
        }, 4);
    }

    // -- composed triplane micro-config --
    {
        let cfg = VaeConfig {
            latent_count: 12,
            channels: 8,
            n_points: 12,
            decoder_layers: 1,
            heads: 2,
            n_freq: 2,
            chunk_size: 8,
            ..Default::default()
        };
        let mut vae = VecsetVae::<f64>::new(cfg, 0xBEE).unwrap();
        let tri_cfg = TriplaneConfig { y_scale: 4.0, plane_size: 2, channels: 6, deconv_layers: 1 };
        let tri =
            TriplaneModel::init(&mut vae.params, tri_cfg, 8, 12, 8, &mut rng).unwrap();
        let item = micro_item(&mut rng, 12, 10);
        let queries_vox: Vec<[f64; 3]> = (0..10)
            .map(|_| [rng.next_f64() * 8.0, rng.next_f64() * 16.0, rng.next_f64() * 8.0])
            .collect();
        let model = vae.model.clone();
        record(&mut report, "triplane-micro-loss", &mut vae.params, move |s| {
            let mut noise = Rng::new(0xFEE);
            let (loss, _) = crate::vae::triplane::triplane_loss_graph(
                &model, &tri, s, &item, &queries_vox, &mut noise,
            )
            .unwrap();
            loss
        }, 3);
    }

    // -- composed diffusion micro-config --
    {
        let mut store = ParamStore::<f64>::new();
        let cfg = DenoiserConfig {
            latent_count: 2,
            channels: 4,
            d_model: 8,
            layers: 3,
            heads: 2,
            pe_dim: 4,
        };
        let model = DenoiserModel::init(&mut store, cfg, &mut rng);
        // randomize the zero-initialized output so all layers carry gradient
        let out_w = store.id("denoise.out.w").unwrap();
        *store.tensor_mut(out_w) = Tensor::randn(vec![8, 4], 0.4, &mut rng);
        let mut qrng = Rng::new(0xD1F);
        let x_t = QuadLatent::noise(2, 4, &mut qrng);
        let clean = QuadLatent::noise(2, 4, &mut qrng);
        let target = Tensor::<f64>::randn(vec![8, 4], 1.0, &mut rng);
        let cond32 = build_condition(MaskConfig::Diagonal, &clean);
        let cond = Tensor::<f64>::from_f64_tensor(&cond32.to_f64_tensor());
        let x64 = Tensor::<f64>::from_f64_tensor(&x_t.x.to_f64_tensor());
        record(&mut report, "denoiser-micro-loss", &mut store, move |s| {
            let x = s.constant(x64.clone());
            let eps = model.forward_graph(s, x, &cond, 7).unwrap();
            let t = s.constant(target.clone());
            s.graph.mse(eps, t)
        }, 4);
    }

    report
}

fn micro_item(rng: &mut Rng, n_points: usize, n_queries: usize) -> VaeTrainItem {
    let cloud = |rng: &mut Rng| -> Vec<[f64; 3]> {
        (0..n_points)
            .map(|_| [rng.next_f64() * 2.0 - 1.0, rng.next_f64() * 3.0 - 1.0, rng.next_f64() * 2.0 - 1.0])
            .collect()
    };
    VaeTrainItem {
        points_p: cloud(rng),
        points_q: cloud(rng),
        queries_norm: (0..n_queries)
            .map(|_| [rng.next_f64() * 2.0 - 1.0, rng.next_f64() * 3.0 - 1.0, rng.next_f64() * 2.0 - 1.0])
            .collect(),
        labels: (0..n_queries).map(|_| rng.next_f64() < 0.5).collect(),
        height_target: 0.4,
    }
}

#[cfg(test)]
mod tests {
    #[test]
    fn suite_stays_within_contract() {
        let report = super::full_kernel_suite();
        assert!(
            report.worst_rel_err <= 1e-3,
            "worst {} in {}",
            report.worst_rel_err,
            report.worst_name
        );
    }
}

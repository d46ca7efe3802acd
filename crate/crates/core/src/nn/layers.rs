//! Layer parameter bundles and forward builders.
//!
//! A layer owns `ParamId`s into a `ParamStore` plus its hyperparameters;
//! `forward` records the computation onto a `Session`'s tape. Construction
//! and forward are separated so frozen models can run read-only from many
//! threads while training holds the single writer.

use crate::error::{Error, Result};
use crate::rng::Rng;

use super::graph::Var;
use super::optim::{ParamId, ParamStore, Session};
use super::tensor::{Scalar, Tensor};

/// Fourier positional features: raw coords followed by
/// [sin(2^j pi x), cos(2^j pi x)] for j in 0..n_freq, per component.
/// coords: [n, d] -> [n, d + 2*d*n_freq].
pub fn fourier_pe<T: Scalar>(coords: &Tensor<T>, n_freq: usize) -> Tensor<T> {
    assert!(n_freq >= 1, "fourier_pe needs n_freq >= 1");
    let (n, d) = (coords.rows(), coords.cols());
    let width = d + 2 * d * n_freq;
    let mut out = vec![T::ZERO; n * width];
    for r in 0..n {
        let row = &coords.data()[r * d..(r + 1) * d];
        let dst = &mut out[r * width..(r + 1) * width];
        dst[..d].copy_from_slice(row);
        let mut k = d;
        for &x in row {
            let xf = x.to_f64();
            for j in 0..n_freq {
                let arg = (1u64 << j) as f64 * std::f64::consts::PI * xf;
                dst[k] = T::from_f64(arg.sin());
                dst[k + 1] = T::from_f64(arg.cos());
                k += 2;
            }
        }
    }
    Tensor::new(vec![n, width], out).unwrap()
}

pub fn fourier_width(d: usize, n_freq: usize) -> usize {
    d + 2 * d * n_freq
}

/// Sinusoidal timestep embedding of even width `dim`, shaped [1, dim].
pub fn timestep_embedding<T: Scalar>(t: usize, dim: usize) -> Tensor<T> {
    assert!(dim % 2 == 0, "timestep embedding dim must be even");
    let half = dim / 2;
    let mut out = vec![T::ZERO; dim];
    for k in 0..half {
        let freq = (-(10000f64.ln()) * k as f64 / half as f64).exp();
        let arg = t as f64 * freq;
        out[k] = T::from_f64(arg.sin());
        out[half + k] = T::from_f64(arg.cos());
    }
    Tensor::new(vec![1, dim], out).unwrap()
}

#[derive(Clone, Copy, Debug)]
pub struct LinearLayer {
    pub w: ParamId,
    pub b: ParamId,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl LinearLayer {
    pub fn init<T: Scalar>(
        store: &mut ParamStore<T>,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        rng: &mut Rng,
    ) -> Self {
        let std = (2.0 / (in_dim + out_dim) as f64).sqrt();
        let w = store.add(format!("{name}.w"), Tensor::randn(vec![in_dim, out_dim], std, rng));
        let b = store.add(format!("{name}.b"), Tensor::zeros(vec![out_dim]));
        LinearLayer { w, b, in_dim, out_dim }
    }

    /// Output projections that start as the zero map (residual branches).
    pub fn init_zero<T: Scalar>(
        store: &mut ParamStore<T>,
        name: &str,
        in_dim: usize,
        out_dim: usize,
    ) -> Self {
        let w = store.add(format!("{name}.w"), Tensor::zeros(vec![in_dim, out_dim]));
        let b = store.add(format!("{name}.b"), Tensor::zeros(vec![out_dim]));
        LinearLayer { w, b, in_dim, out_dim }
    }

    pub fn forward<T: Scalar>(&self, sess: &mut Session<T>, x: Var) -> Var {
        let w = sess.param(self.w);
        let b = sess.param(self.b);
        sess.graph.linear(x, w, b)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct LayerNormLayer {
    pub gain: ParamId,
    pub bias: ParamId,
    pub dim: usize,
}

impl LayerNormLayer {
    pub fn init<T: Scalar>(store: &mut ParamStore<T>, name: &str, dim: usize) -> Self {
        let gain = store.add(format!("{name}.gain"), Tensor::full(vec![dim], T::ONE));
        let bias = store.add(format!("{name}.bias"), Tensor::zeros(vec![dim]));
        LayerNormLayer { gain, bias, dim }
    }

    pub fn forward<T: Scalar>(&self, sess: &mut Session<T>, x: Var) -> Var {
        let g = sess.param(self.gain);
        let b = sess.param(self.bias);
        sess.graph.layer_norm(x, g, b)
    }
}

/// Multi-head cross-attention with learned Q/K/V/output projections.
/// Queries and context may have different input widths; attention runs at
/// width `dim` split over `heads`.
#[derive(Clone, Copy, Debug)]
pub struct CrossAttentionLayer {
    pub wq: LinearLayer,
    pub wk: LinearLayer,
    pub wv: LinearLayer,
    pub wo: LinearLayer,
    pub heads: usize,
    pub dim: usize,
}

impl CrossAttentionLayer {
    pub fn init<T: Scalar>(
        store: &mut ParamStore<T>,
        name: &str,
        query_dim: usize,
        context_dim: usize,
        dim: usize,
        heads: usize,
        rng: &mut Rng,
    ) -> Self {
        assert!(dim % heads == 0, "attention dim {dim} not divisible by {heads} heads");
        CrossAttentionLayer {
            wq: LinearLayer::init(store, &format!("{name}.wq"), query_dim, dim, rng),
            wk: LinearLayer::init(store, &format!("{name}.wk"), context_dim, dim, rng),
            wv: LinearLayer::init(store, &format!("{name}.wv"), context_dim, dim, rng),
            wo: LinearLayer::init(store, &format!("{name}.wo"), dim, dim, rng),
            heads,
            dim,
        }
    }

    pub fn forward<T: Scalar>(&self, sess: &mut Session<T>, queries: Var, context: Var) -> Result<Var> {
        let qs = sess.graph.shape(queries).to_vec();
        let cs = sess.graph.shape(context).to_vec();
        if qs.last() != Some(&self.wq.in_dim) {
            return Err(Error::shape(format!(
                "cross-attention queries have width {:?}, layer expects {}",
                qs.last(),
                self.wq.in_dim
            )));
        }
        if cs.last() != Some(&self.wk.in_dim) {
            return Err(Error::shape(format!(
                "cross-attention context has width {:?}, layer expects {}",
                cs.last(),
                self.wk.in_dim
            )));
        }
        let q = self.wq.forward(sess, queries);
        let k = self.wk.forward(sess, context);
        let v = self.wv.forward(sess, context);
        let attended = sess.graph.attention(q, k, v, self.heads);
        Ok(self.wo.forward(sess, attended))
    }
}

/// Pre-norm transformer block:
/// x + attn(LN(x)) followed by x + FFN(LN(x)), FFN width = ffn_mult * dim.
#[derive(Clone, Copy, Debug)]
pub struct TransformerBlock {
    pub ln1: LayerNormLayer,
    pub wq: LinearLayer,
    pub wk: LinearLayer,
    pub wv: LinearLayer,
    pub wo: LinearLayer,
    pub ln2: LayerNormLayer,
    pub ff1: LinearLayer,
    pub ff2: LinearLayer,
    pub heads: usize,
}

pub const FFN_MULT: usize = 4;

impl TransformerBlock {
    pub fn init<T: Scalar>(
        store: &mut ParamStore<T>,
        name: &str,
        dim: usize,
        heads: usize,
        rng: &mut Rng,
    ) -> Self {
        assert!(dim % heads == 0);
        let hidden = FFN_MULT * dim;
        TransformerBlock {
            ln1: LayerNormLayer::init(store, &format!("{name}.ln1"), dim),
            wq: LinearLayer::init(store, &format!("{name}.wq"), dim, dim, rng),
            wk: LinearLayer::init(store, &format!("{name}.wk"), dim, dim, rng),
            wv: LinearLayer::init(store, &format!("{name}.wv"), dim, dim, rng),
            wo: LinearLayer::init(store, &format!("{name}.wo"), dim, dim, rng),
            ln2: LayerNormLayer::init(store, &format!("{name}.ln2"), dim),
            ff1: LinearLayer::init(store, &format!("{name}.ff1"), dim, hidden, rng),
            ff2: LinearLayer::init(store, &format!("{name}.ff2"), hidden, dim, rng),
            heads,
        }
    }

    pub fn forward<T: Scalar>(&self, sess: &mut Session<T>, x: Var) -> Var {
        let h = self.ln1.forward(sess, x);
        let q = self.wq.forward(sess, h);
        let k = self.wk.forward(sess, h);
        let v = self.wv.forward(sess, h);
        let a = sess.graph.attention(q, k, v, self.heads);
        let a = self.wo.forward(sess, a);
        let x = sess.graph.add(x, a);
        let h2 = self.ln2.forward(sess, x);
        let f = self.ff1.forward(sess, h2);
        let f = sess.graph.gelu(f);
        let f = self.ff2.forward(sess, f);
        sess.graph.add(x, f)
    }
}

/// z = mean + exp(logvar / 2) * eps with eps drawn from N(0, I).
pub fn reparameterize<T: Scalar>(
    sess: &mut Session<T>,
    mean: Var,
    logvar: Var,
    rng: &mut Rng,
) -> Var {
    let shape = sess.graph.shape(mean).to_vec();
    let eps = Tensor::randn(shape, 1.0, rng);
    let eps = sess.constant(eps);
    let half_lv = sess.graph.scale(logvar, T::from_f64(0.5));
    let std = sess.graph.exp(half_lv);
    let noise = sess.graph.mul(std, eps);
    sess.graph.add(mean, noise)
}

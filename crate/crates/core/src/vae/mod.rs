//! Chunk VAE: a point-cloud encoder onto a fixed set of latent vectors, an
//! embedding-consistency regularizer, a height head, and a self-attention
//! decoder with a vector-set occupancy head (triplane head in `triplane`).

pub mod decode;
pub mod latents;
pub mod train;
pub mod triplane;

use crate::error::{Error, Result};
use crate::nn::layers::{
    fourier_pe, fourier_width, reparameterize, CrossAttentionLayer, LayerNormLayer, LinearLayer,
    TransformerBlock,
};
use crate::nn::{ParamStore, Scalar, Session, Tensor, Var};
use crate::rng::Rng;

/// Hyperparameters of the chunk VAE. Reference scale uses V=16, c=64,
/// N_p=4096, L=24 on 50-voxel chunks; the desk-scale defaults below keep
/// every formula intact at a size a CPU can train.
#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct VaeConfig {
    /// Latent vector count.
    pub latent_count: usize,
    /// Channels per latent vector.
    pub channels: usize,
    /// Encoder point-cloud size.
    pub n_points: usize,
    /// Decoder self-attention depth.
    pub decoder_layers: usize,
    /// Attention heads for every attention layer.
    pub heads: usize,
    /// Fourier frequency count for positional features.
    pub n_freq: usize,
    /// Chunk side length in voxels; all normalization constants derive from it.
    pub chunk_size: usize,
    /// Hidden width of the positional-feature MLP applied before the
    /// encoder context and occupancy-query projections (0 = raw features).
    /// The raw Fourier ladder aliases heights spaced by full periods; the
    /// small nonlinearity lets absolute height participate.
    pub pe_hidden: usize,
    /// Attention width of the occupancy head (0 = `channels`).
    pub head_dim: usize,
    /// Pixel-shuffle upsample factor for the vector set (1 = off).
    pub upsample: usize,
    /// Extra self-attention blocks after upsampling.
    pub upsample_layers: usize,
    pub lambda_ce: f64,
    pub lambda_kl: f64,
    pub lambda_emb: f64,
    pub lambda_height: f64,
}

impl Default for VaeConfig {
    fn default() -> Self {
        VaeConfig {
            latent_count: 8,
            channels: 32,
            n_points: 1024,
            decoder_layers: 6,
            heads: 4,
            n_freq: 8,
            chunk_size: 32,
            pe_hidden: 64,
            head_dim: 0,
            upsample: 4,
            upsample_layers: 3,
            lambda_ce: 1.0,
            lambda_kl: 1e-3,
            lambda_emb: 0.1,
            lambda_height: 1.0,
        }
    }
}

impl VaeConfig {
    pub fn pe_width(&self) -> usize {
        fourier_width(3, self.n_freq)
    }

    pub fn validate(&self) -> Result<()> {
        if self.channels % self.heads != 0 {
            return Err(Error::Config(format!(
                "channels {} not divisible by heads {}",
                self.channels, self.heads
            )));
        }
        if self.latent_count == 0 || self.channels == 0 || self.n_points == 0 {
            return Err(Error::Config("latent_count, channels, n_points must be positive".into()));
        }
        if self.upsample == 0 {
            return Err(Error::Config("upsample factor must be >= 1".into()));
        }
        Ok(())
    }
}

/// A V x c vector set encoding one chunk. Carries the posterior moments
/// when produced by the encoder.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentSet {
    pub z: Tensor<f32>,
    pub moments: Option<(Tensor<f32>, Tensor<f32>)>,
}

impl LatentSet {
    pub fn new(z: Tensor<f32>) -> Result<Self> {
        if z.shape().len() != 2 {
            return Err(Error::shape(format!("latent set must be 2D, got {:?}", z.shape())));
        }
        if !z.all_finite() {
            return Err(Error::invalid("latent set contains non-finite values"));
        }
        Ok(LatentSet { z, moments: None })
    }

    pub fn latent_count(&self) -> usize {
        self.z.rows()
    }

    pub fn channels(&self) -> usize {
        self.z.cols()
    }

    pub fn mean(&self) -> Option<&Tensor<f32>> {
        self.moments.as_ref().map(|(m, _)| m)
    }
}

/// Mean squared difference between two latent sets (the embedding
/// consistency loss).
pub fn consistency_loss(a: &LatentSet, b: &LatentSet) -> f64 {
    assert_eq!(a.z.shape(), b.z.shape(), "latent shapes differ");
    let n = a.z.len().max(1);
    a.z.data()
        .iter()
        .zip(b.z.data())
        .map(|(&x, &y)| {
            let d = (x - y) as f64;
            d * d
        })
        .sum::<f64>()
        / n as f64
}

#[derive(Clone)]
struct PeFeaturizer {
    fc1: LinearLayer,
    fc2: LinearLayer,
}

impl PeFeaturizer {
    fn init<T: Scalar>(
        store: &mut ParamStore<T>,
        name: &str,
        pe_width: usize,
        hidden: usize,
        rng: &mut Rng,
    ) -> Self {
        PeFeaturizer {
            fc1: LinearLayer::init(store, &format!("{name}.fc1"), pe_width, hidden, rng),
            fc2: LinearLayer::init(store, &format!("{name}.fc2"), hidden, hidden, rng),
        }
    }

    fn forward<T: Scalar>(&self, sess: &mut Session<T>, pe: Var) -> Var {
        let h = self.fc1.forward(sess, pe);
        let h = sess.graph.gelu(h);
        self.fc2.forward(sess, h)
    }
}

#[derive(Clone)]
struct EncoderLayers {
    queries: crate::nn::ParamId,
    featurizer: Option<PeFeaturizer>,
    ca: CrossAttentionLayer,
    norm: LayerNormLayer,
    moments: LinearLayer,
}

#[derive(Clone)]
struct HeightLayers {
    embedding: crate::nn::ParamId,
    ca: CrossAttentionLayer,
    fc: LinearLayer,
}

#[derive(Clone)]
struct UpsampleLayers {
    proj: LinearLayer,
    blocks: Vec<TransformerBlock>,
}

#[derive(Clone)]
struct VaeLayers {
    encoder: EncoderLayers,
    height: HeightLayers,
    decoder_blocks: Vec<TransformerBlock>,
    upsample: Option<UpsampleLayers>,
    final_norm: LayerNormLayer,
    head_featurizer: Option<PeFeaturizer>,
    head_ca: CrossAttentionLayer,
    head_fc: LinearLayer,
}

/// Output handles of one encoder pass on a session tape.
pub struct EncodedVars {
    pub mean: Var,
    pub logvar: Var,
    pub z: Var,
}

/// Layer handles plus hyperparameters; cheap to clone and independent of
/// the parameter storage, so read-only forward passes can share a frozen
/// store across threads.
#[derive(Clone)]
pub struct VaeModel {
    pub cfg: VaeConfig,
    layers: VaeLayers,
}

pub struct VecsetVae<T: Scalar> {
    pub model: VaeModel,
    pub params: ParamStore<T>,
}

impl<T: Scalar> VecsetVae<T> {
    pub fn new(cfg: VaeConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = Rng::new(seed);
        let mut store = ParamStore::new();
        let (v, c) = (cfg.latent_count, cfg.channels);
        let pe_w = cfg.pe_width();

        let ctx_width = if cfg.pe_hidden > 0 { cfg.pe_hidden } else { pe_w };
        let encoder = EncoderLayers {
            queries: store.add("enc.queries", Tensor::randn(vec![v, c], 0.5, &mut rng)),
            featurizer: (cfg.pe_hidden > 0)
                .then(|| PeFeaturizer::init(&mut store, "enc.feat", pe_w, cfg.pe_hidden, &mut rng)),
            ca: CrossAttentionLayer::init(&mut store, "enc.ca", c, ctx_width, c, cfg.heads, &mut rng),
            norm: LayerNormLayer::init(&mut store, "enc.norm", c),
            moments: LinearLayer::init(&mut store, "enc.moments", c, 2 * c, &mut rng),
        };
        // start with a small posterior variance
        {
            let b = store.tensor_mut(encoder.moments.b);
            for i in c..2 * c {
                b.data_mut()[i] = T::from_f64(-4.0);
            }
        }
        let height = HeightLayers {
            embedding: store.add("height.e_h", Tensor::randn(vec![1, c], 0.5, &mut rng)),
            ca: CrossAttentionLayer::init(&mut store, "height.ca", c, c, c, cfg.heads, &mut rng),
            fc: LinearLayer::init(&mut store, "height.fc", c, 1, &mut rng),
        };
        let decoder_blocks = (0..cfg.decoder_layers)
            .map(|i| TransformerBlock::init(&mut store, &format!("dec.blk{i}"), c, cfg.heads, &mut rng))
            .collect();
        let upsample = if cfg.upsample > 1 {
            let proj = LinearLayer::init(&mut store, "dec.up.proj", c, cfg.upsample * c, &mut rng);
            let blocks = (0..cfg.upsample_layers)
                .map(|i| {
                    TransformerBlock::init(&mut store, &format!("dec.up.blk{i}"), c, cfg.heads, &mut rng)
                })
                .collect();
            Some(UpsampleLayers { proj, blocks })
        } else {
            None
        };
        let final_norm = LayerNormLayer::init(&mut store, "dec.norm", c);
        let head_featurizer = (cfg.pe_hidden > 0)
            .then(|| PeFeaturizer::init(&mut store, "head.feat", pe_w, cfg.pe_hidden, &mut rng));
        let head_dim = if cfg.head_dim == 0 { c } else { cfg.head_dim };
        let head_ca = CrossAttentionLayer::init(
            &mut store, "head.ca", ctx_width, c, head_dim, cfg.heads, &mut rng,
        );
        let head_fc = LinearLayer::init(&mut store, "head.fc", head_dim, 1, &mut rng);

        Ok(VecsetVae {
            model: VaeModel {
                cfg,
                layers: VaeLayers {
                    encoder,
                    height,
                    decoder_blocks,
                    upsample,
                    final_norm,
                    head_featurizer,
                    head_ca,
                    head_fc,
                },
            },
            params: store,
        })
    }

    pub fn cfg(&self) -> &VaeConfig {
        &self.model.cfg
    }

    /// Inference-time encoding; `sample` chooses the reparameterized draw
    /// (training path) or the posterior mean (the deterministic embedding
    /// used for diffusion and decoding).
    pub fn encode(&self, points_norm: &[[f64; 3]], sample: Option<&mut Rng>) -> Result<LatentSet> {
        let mut sess = Session::new(&self.params);
        let mut throwaway = Rng::new(0);
        let use_sample = sample.is_some();
        let rng = match sample {
            Some(r) => r,
            None => &mut throwaway,
        };
        let enc = self.model.encode_graph(&mut sess, points_norm, rng)?;
        let mean = sess.value(enc.mean).to_f64_tensor();
        let logvar = sess.value(enc.logvar).to_f64_tensor();
        let z = if use_sample {
            sess.value(enc.z).to_f64_tensor()
        } else {
            mean.clone()
        };
        Ok(LatentSet {
            z: Tensor::from_f64_tensor(&z),
            moments: Some((Tensor::from_f64_tensor(&mean), Tensor::from_f64_tensor(&logvar))),
        })
    }

    pub fn predict_height(&self, latent: &LatentSet) -> Result<f64> {
        let mut sess = Session::new(&self.params);
        let z = sess.constant(Tensor::from_f64_tensor(&latent.z.to_f64_tensor()));
        let h = self.model.predict_height_graph(&mut sess, z)?;
        Ok(sess.value(h).item().to_f64())
    }

    /// Occupancy logits for a latent set outside any training tape.
    pub fn occupancy_logits(&self, latent: &LatentSet, queries_norm: &[[f64; 3]]) -> Result<Vec<f64>> {
        let mut sess = Session::new(&self.params);
        let z = sess.constant(Tensor::from_f64_tensor(&latent.z.to_f64_tensor()));
        let ctx = self.model.decoded_context(&mut sess, z);
        let logits = self.model.occupancy_logits_graph(&mut sess, ctx, queries_norm)?;
        Ok(sess.value(logits).data().iter().map(|x| x.to_f64()).collect())
    }
}

impl VaeModel {

    fn points_tensor<T: Scalar>(&self, points: &[[f64; 3]]) -> Result<Tensor<T>> {
        if points.len() != self.cfg.n_points {
            return Err(Error::invalid(format!(
                "encoder expects {} points, got {}",
                self.cfg.n_points,
                points.len()
            )));
        }
        let mut data = Vec::with_capacity(points.len() * 3);
        for p in points {
            data.extend(p.iter().map(|&x| T::from_f64(x)));
        }
        Tensor::new(vec![points.len(), 3], data)
    }

    /// Records the encoder onto the tape: learnable query tokens
    /// cross-attend over the Fourier features of the point cloud, a linear
    /// layer yields posterior moments, and z is the reparameterized sample.
    pub fn encode_graph<T: Scalar>(
        &self,
        sess: &mut Session<T>,
        points_norm: &[[f64; 3]],
        rng: &mut Rng,
    ) -> Result<EncodedVars> {
        let points = self.points_tensor(points_norm)?;
        let pe = fourier_pe(&points, self.cfg.n_freq);
        let mut context = sess.constant(pe);
        if let Some(feat) = &self.layers.encoder.featurizer {
            context = feat.forward(sess, context);
        }
        let queries = sess.param(self.layers.encoder.queries);
        let agg = self.layers.encoder.ca.forward(sess, queries, context)?;
        let agg = self.layers.encoder.norm.forward(sess, agg);
        let moments = self.layers.encoder.moments.forward(sess, agg);
        let c = self.cfg.channels;
        let mean = sess.graph.slice_cols(moments, 0, c);
        let logvar = sess.graph.slice_cols(moments, c, c);
        let z = reparameterize(sess, mean, logvar, rng);
        Ok(EncodedVars { mean, logvar, z })
    }

    /// h_hat = FC(CA(e_h over z)): the learned height embedding queries the
    /// latent set.
    pub fn predict_height_graph<T: Scalar>(&self, sess: &mut Session<T>, z: Var) -> Result<Var> {
        let e_h = sess.param(self.layers.height.embedding);
        let attended = self.layers.height.ca.forward(sess, e_h, z)?;
        let out = self.layers.height.fc.forward(sess, attended);
        Ok(sess.graph.reshape(out, vec![1]))
    }

    /// f_out = SA_L(...SA_1(z)): shape-preserving decoder stack.
    pub fn decode_features_graph<T: Scalar>(&self, sess: &mut Session<T>, z: Var) -> Var {
        let mut x = z;
        for blk in &self.layers.decoder_blocks {
            x = blk.forward(sess, x);
        }
        x
    }

    /// Pixel-shuffle style token upsampling: project channels up by the
    /// factor, reshape channel groups into new tokens, then run the extra
    /// attention blocks.
    pub fn upsample_graph<T: Scalar>(&self, sess: &mut Session<T>, f: Var) -> Var {
        let Some(up) = &self.layers.upsample else {
            return f;
        };
        let v = sess.graph.shape(f)[0];
        let c = self.cfg.channels;
        let u = self.cfg.upsample;
        let wide = up.proj.forward(sess, f);
        let mut x = sess.graph.reshape(wide, vec![v * u, c]);
        for blk in &up.blocks {
            x = blk.forward(sess, x);
        }
        x
    }

    /// Occupancy logits: Fourier features of the queries attend over the
    /// decoded vector set, then a linear head yields one logit per query.
    pub fn occupancy_logits_graph<T: Scalar>(
        &self,
        sess: &mut Session<T>,
        f_out: Var,
        queries_norm: &[[f64; 3]],
    ) -> Result<Var> {
        let mut data = Vec::with_capacity(queries_norm.len() * 3);
        for q in queries_norm {
            data.extend(q.iter().map(|&x| T::from_f64(x)));
        }
        let q = Tensor::new(vec![queries_norm.len(), 3], data)?;
        let pe = fourier_pe(&q, self.cfg.n_freq);
        let mut pe = sess.constant(pe);
        if let Some(feat) = &self.layers.head_featurizer {
            pe = feat.forward(sess, pe);
        }
        let normed = self.layers.final_norm.forward(sess, f_out);
        let attended = self.layers.head_ca.forward(sess, pe, normed)?;
        let logits = self.layers.head_fc.forward(sess, attended);
        let n = queries_norm.len();
        Ok(sess.graph.reshape(logits, vec![n]))
    }

    /// Full decode pipeline on the tape: SA stack, optional upsample, head.
    pub fn decoded_context<T: Scalar>(&self, sess: &mut Session<T>, z: Var) -> Var {
        let f = self.decode_features_graph(sess, z);
        self.upsample_graph(sess, f)
    }

}

/// One chunk's training sample: two independent point clouds, occupancy
/// queries with labels, and the normalized height target.
#[derive(Clone, Debug)]
pub struct VaeTrainItem {
    pub points_p: Vec<[f64; 3]>,
    pub points_q: Vec<[f64; 3]>,
    pub queries_norm: Vec<[f64; 3]>,
    pub labels: Vec<bool>,
    pub height_target: f64,
}

/// Scalar component values of one loss evaluation.
#[derive(Clone, Copy, Debug, Default)]
pub struct VaeLossParts {
    pub total: f64,
    pub ce: f64,
    pub kl: f64,
    pub emb: f64,
    pub height: f64,
}

impl VaeLossParts {
    fn add(&mut self, other: &VaeLossParts) {
        self.total += other.total;
        self.ce += other.ce;
        self.kl += other.kl;
        self.emb += other.emb;
        self.height += other.height;
    }

    fn scale(&mut self, k: f64) {
        self.total *= k;
        self.ce *= k;
        self.kl *= k;
        self.emb *= k;
        self.height *= k;
    }
}

impl VaeModel {
    /// Records the full per-chunk loss:
    /// lambda_ce*CE + lambda_kl*KL + lambda_emb*EMB + lambda_height*HEIGHT.
    /// Both point clouds are encoded; occupancy and height supervise the
    /// p-cloud sample.
    pub fn loss_graph<T: Scalar>(
        &self,
        sess: &mut Session<T>,
        item: &VaeTrainItem,
        rng: &mut Rng,
    ) -> Result<(Var, VaeLossParts)> {
        let enc_p = self.encode_graph(sess, &item.points_p, rng)?;
        let enc_q = self.encode_graph(sess, &item.points_q, rng)?;

        let kl_p = sess.graph.kl_normal(enc_p.mean, enc_p.logvar);
        let kl_q = sess.graph.kl_normal(enc_q.mean, enc_q.logvar);
        let kl_sum = sess.graph.add(kl_p, kl_q);
        let kl = sess.graph.scale(kl_sum, T::from_f64(0.5));

        let emb = {
            let d = sess.graph.sub(enc_p.z, enc_q.z);
            let sq = sess.graph.mul(d, d);
            sess.graph.mean_all(sq)
        };

        let ctx = self.decoded_context(sess, enc_p.z);
        let logits = self.occupancy_logits_graph(sess, ctx, &item.queries_norm)?;
        let labels = Tensor::new(
            vec![item.labels.len()],
            item.labels.iter().map(|&b| if b { T::ONE } else { T::ZERO }).collect(),
        )?;
        let ce = sess.graph.bce_with_logits(logits, &labels);

        let h_hat = self.predict_height_graph(sess, enc_p.z)?;
        let h_target = sess.constant(Tensor::new(vec![1], vec![T::from_f64(item.height_target)])?);
        let h_diff = sess.graph.sub(h_hat, h_target);
        let h_sq = sess.graph.mul(h_diff, h_diff);
        let height = sess.graph.mean_all(h_sq);

        let ce_w = sess.graph.scale(ce, T::from_f64(self.cfg.lambda_ce));
        let kl_w = sess.graph.scale(kl, T::from_f64(self.cfg.lambda_kl));
        let emb_w = sess.graph.scale(emb, T::from_f64(self.cfg.lambda_emb));
        let h_w = sess.graph.scale(height, T::from_f64(self.cfg.lambda_height));
        let s1 = sess.graph.add(ce_w, kl_w);
        let s2 = sess.graph.add(emb_w, h_w);
        let total = sess.graph.add(s1, s2);

        let parts = VaeLossParts {
            total: sess.value(total).item().to_f64(),
            ce: sess.value(ce).item().to_f64(),
            kl: sess.value(kl).item().to_f64(),
            emb: sess.value(emb).item().to_f64(),
            height: sess.value(height).item().to_f64(),
        };
        Ok((total, parts))
    }

    /// Mean loss over a batch on one tape (used by gradient checking; the
    /// trainer parallelizes per item instead).
    pub fn batch_loss_graph<T: Scalar>(
        &self,
        sess: &mut Session<T>,
        items: &[VaeTrainItem],
        rng: &mut Rng,
    ) -> Result<(Var, VaeLossParts)> {
        assert!(!items.is_empty());
        let mut acc: Option<Var> = None;
        let mut parts = VaeLossParts::default();
        for item in items {
            let (loss, p) = self.loss_graph(sess, item, rng)?;
            parts.add(&p);
            acc = Some(match acc {
                Some(a) => sess.graph.add(a, loss),
                None => loss,
            });
        }
        let k = T::from_f64(1.0 / items.len() as f64);
        parts.scale(1.0 / items.len() as f64);
        Ok((sess.graph.scale(acc.unwrap(), k), parts))
    }
}

//! Triplane occupancy head: the decoded vector set reshapes into three
//! axis-aligned feature planes, deconvolutions upsample them, and queries
//! read features by bilinear interpolation (clamped to [-1, 1]).
//!
//! Spatially structured baseline to the vector-set head; queries compress
//! along y by the scale factor S, so geometry above S * chunk is cut off by
//! clamping (the failure mode the uniform vector set avoids).

use crate::error::{Error, Result};
use crate::nn::layers::LinearLayer;
use crate::nn::{Graph, ParamId, ParamStore, Scalar, Session, Tensor, Var};
use crate::rng::Rng;

use super::VaeModel;

#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct TriplaneConfig {
    /// y-axis compression scale S; queries normalize with d = (chunk, chunk*S, chunk).
    pub y_scale: f64,
    /// Side length k of each latent plane; requires V = 3 * k^2.
    pub plane_size: usize,
    /// Channels of the upsampled planes.
    pub channels: usize,
    /// Number of resolution-doubling deconvolutions.
    pub deconv_layers: usize,
}

impl Default for TriplaneConfig {
    fn default() -> Self {
        // desk scale: V = 3*4^2 = 48 latents, 16x16 planes after 2 doublings
        TriplaneConfig { y_scale: 6.0, plane_size: 4, channels: 16, deconv_layers: 2 }
    }
}

impl TriplaneConfig {
    pub fn resolution(&self) -> usize {
        self.plane_size << self.deconv_layers
    }

    pub fn latent_count(&self) -> usize {
        3 * self.plane_size * self.plane_size
    }
}

/// Splits decoder tokens into plane `which` (0: xy, 1: xz, 2: yz) of shape
/// [c, k, k]; token p*k*k + r*k + q maps to plane p at (row r, col q).
pub fn plane_from_tokens<T: Scalar>(g: &mut Graph<T>, tokens: Var, which: usize, k: usize) -> Var {
    let shape = g.shape(tokens).to_vec();
    let (v, c) = (shape[0], shape[1]);
    assert_eq!(v, 3 * k * k, "tokens {v} do not form 3 planes of {k}x{k}");
    assert!(which < 3);
    let src = g.value(tokens).clone();
    let mut out = Tensor::zeros(vec![c, k, k]);
    for r in 0..k {
        for q in 0..k {
            let tok = which * k * k + r * k + q;
            for ch in 0..c {
                out.data_mut()[(ch * k + r) * k + q] = src.data()[tok * c + ch];
            }
        }
    }
    g.custom(
        out,
        &[tokens],
        Box::new(move |vals, grad, sink| {
            let mut back = Tensor::zeros(vals[tokens.0].shape().to_vec());
            for r in 0..k {
                for q in 0..k {
                    let tok = which * k * k + r * k + q;
                    for ch in 0..c {
                        back.data_mut()[tok * c + ch] = grad.data()[(ch * k + r) * k + q];
                    }
                }
            }
            sink(tokens.0, back);
        }),
    )
}

/// Transposed 2D convolution, kernel 4, stride 2, padding 1: doubles the
/// spatial resolution. x: [cin, h, w], weight: [cin, cout*16], bias: [cout].
pub fn deconv2x<T: Scalar>(g: &mut Graph<T>, x: Var, weight: Var, bias: Var) -> Var {
    let xs = g.shape(x).to_vec();
    let (cin, h, w) = (xs[0], xs[1], xs[2]);
    let ws = g.shape(weight).to_vec();
    assert_eq!(ws[0], cin, "deconv weight cin mismatch");
    assert_eq!(ws[1] % 16, 0, "deconv weight must pack 4x4 kernels");
    let cout = ws[1] / 16;
    assert_eq!(g.value(bias).len(), cout, "deconv bias mismatch");
    let (oh, ow) = (2 * h, 2 * w);

    let xv = g.value(x).clone();
    let wv = g.value(weight).clone();
    let bv = g.value(bias).clone();
    let mut out = Tensor::zeros(vec![cout, oh, ow]);
    for oc in 0..cout {
        let b = bv.data()[oc];
        for oy in 0..oh {
            for ox in 0..ow {
                out.data_mut()[(oc * oh + oy) * ow + ox] = b;
            }
        }
    }
    // out[oc, 2*iy + ky - 1, 2*ix + kx - 1] += x[ic, iy, ix] * w[ic, oc, ky, kx]
    for ic in 0..cin {
        for iy in 0..h {
            for ix in 0..w {
                let xval = xv.data()[(ic * h + iy) * w + ix];
                for ky in 0..4usize {
                    let oy = (2 * iy + ky) as isize - 1;
                    if oy < 0 || oy as usize >= oh {
                        continue;
                    }
                    for kx in 0..4usize {
                        let ox = (2 * ix + kx) as isize - 1;
                        if ox < 0 || ox as usize >= ow {
                            continue;
                        }
                        for oc in 0..cout {
                            let wval = wv.data()[ic * (cout * 16) + oc * 16 + ky * 4 + kx];
                            let idx = (oc * oh + oy as usize) * ow + ox as usize;
                            let o = out.data()[idx] + xval * wval;
                            out.data_mut()[idx] = o;
                        }
                    }
                }
            }
        }
    }

    g.custom(
        out,
        &[x, weight, bias],
        Box::new(move |vals, grad, sink| {
            let xv = &vals[x.0];
            let wv = &vals[weight.0];
            let mut gx = Tensor::zeros(vec![cin, h, w]);
            let mut gw = Tensor::zeros(wv.shape().to_vec());
            let mut gb = Tensor::zeros(vec![cout]);
            for oc in 0..cout {
                let mut acc = T::ZERO;
                for oy in 0..oh {
                    for ox in 0..ow {
                        acc += grad.data()[(oc * oh + oy) * ow + ox];
                    }
                }
                gb.data_mut()[oc] = acc;
            }
            for ic in 0..cin {
                for iy in 0..h {
                    for ix in 0..w {
                        let xval = xv.data()[(ic * h + iy) * w + ix];
                        let mut gx_acc = T::ZERO;
                        for ky in 0..4usize {
                            let oy = (2 * iy + ky) as isize - 1;
                            if oy < 0 || oy as usize >= oh {
                                continue;
                            }
                            for kx in 0..4usize {
                                let ox = (2 * ix + kx) as isize - 1;
                                if ox < 0 || ox as usize >= ow {
                                    continue;
                                }
                                for oc in 0..cout {
                                    let gout =
                                        grad.data()[(oc * oh + oy as usize) * ow + ox as usize];
                                    let widx = ic * (cout * 16) + oc * 16 + ky * 4 + kx;
                                    gx_acc += gout * wv.data()[widx];
                                    gw.data_mut()[widx] += gout * xval;
                                }
                            }
                        }
                        gx.data_mut()[(ic * h + iy) * w + ix] = gx_acc;
                    }
                }
            }
            sink(x.0, gx);
            sink(weight.0, gw);
            sink(bias.0, gb);
        }),
    )
}

/// Bilinear plane lookup at normalized coordinates. -1 maps to the
/// left/bottom texel center, +1 to the right/top. plane: [ch, h, w],
/// uv rows are (u, v) with u along w and v along h; output [n, ch].
pub fn bilinear_sample<T: Scalar>(g: &mut Graph<T>, plane: Var, uv: &[[f64; 2]]) -> Var {
    let ps = g.shape(plane).to_vec();
    let (ch, h, w) = (ps[0], ps[1], ps[2]);
    let n = uv.len();
    // (x0, y0, wx, wy) per query
    let taps: Vec<(usize, usize, f64, f64)> = uv
        .iter()
        .map(|&[u, v]| {
            let px = (u.clamp(-1.0, 1.0) + 1.0) / 2.0 * (w - 1) as f64;
            let py = (v.clamp(-1.0, 1.0) + 1.0) / 2.0 * (h - 1) as f64;
            let x0 = (px.floor() as usize).min(w - 1);
            let y0 = (py.floor() as usize).min(h - 1);
            (x0, y0, px - x0 as f64, py - y0 as f64)
        })
        .collect();
    let pv = g.value(plane).clone();
    let mut out = Tensor::zeros(vec![n, ch]);
    for (i, &(x0, y0, wx, wy)) in taps.iter().enumerate() {
        let x1 = (x0 + 1).min(w - 1);
        let y1 = (y0 + 1).min(h - 1);
        for c in 0..ch {
            let p00 = pv.data()[(c * h + y0) * w + x0].to_f64();
            let p10 = pv.data()[(c * h + y0) * w + x1].to_f64();
            let p01 = pv.data()[(c * h + y1) * w + x0].to_f64();
            let p11 = pv.data()[(c * h + y1) * w + x1].to_f64();
            let v = p00 * (1.0 - wx) * (1.0 - wy)
                + p10 * wx * (1.0 - wy)
                + p01 * (1.0 - wx) * wy
                + p11 * wx * wy;
            out.data_mut()[i * ch + c] = T::from_f64(v);
        }
    }
    let taps_back = taps;
    g.custom(
        out,
        &[plane],
        Box::new(move |vals, grad, sink| {
            let mut gp = Tensor::zeros(vals[plane.0].shape().to_vec());
            for (i, &(x0, y0, wx, wy)) in taps_back.iter().enumerate() {
                let x1 = (x0 + 1).min(w - 1);
                let y1 = (y0 + 1).min(h - 1);
                for c in 0..ch {
                    let gq = grad.data()[i * ch + c].to_f64();
                    let mut acc = |y: usize, x: usize, wgt: f64| {
                        let idx = (c * h + y) * w + x;
                        let v = gp.data()[idx] + T::from_f64(gq * wgt);
                        gp.data_mut()[idx] = v;
                    };
                    acc(y0, x0, (1.0 - wx) * (1.0 - wy));
                    acc(y0, x1, wx * (1.0 - wy));
                    acc(y1, x0, (1.0 - wx) * wy);
                    acc(y1, x1, wx * wy);
                }
            }
            sink(plane.0, gp);
        }),
    )
}

#[derive(Clone)]
pub struct TriplaneModel {
    pub cfg: TriplaneConfig,
    pub chunk_size: usize,
    deconvs: Vec<(ParamId, ParamId)>,
    fc: LinearLayer,
}

impl TriplaneModel {
    pub fn init<T: Scalar>(
        store: &mut ParamStore<T>,
        cfg: TriplaneConfig,
        token_channels: usize,
        latent_count: usize,
        chunk_size: usize,
        rng: &mut Rng,
    ) -> Result<Self> {
        if latent_count != cfg.latent_count() {
            return Err(Error::Config(format!(
                "triplane head needs V = 3*k^2 = {} latents, got {latent_count}",
                cfg.latent_count()
            )));
        }
        let mut deconvs = Vec::new();
        for i in 0..cfg.deconv_layers {
            let cin = if i == 0 { token_channels } else { cfg.channels };
            let std = (2.0 / (cin * 16 + cfg.channels) as f64).sqrt();
            let w = store.add(
                format!("tri.deconv{i}.w"),
                Tensor::randn(vec![cin, cfg.channels * 16], std, rng),
            );
            let b = store.add(format!("tri.deconv{i}.b"), Tensor::zeros(vec![cfg.channels]));
            deconvs.push((w, b));
        }
        let feat = if cfg.deconv_layers == 0 { token_channels } else { cfg.channels } * 3;
        let fc = LinearLayer::init(store, "tri.fc", feat, 1, rng);
        Ok(TriplaneModel { cfg, chunk_size, deconvs, fc })
    }

    /// Upsampled feature planes from decoder tokens: [c_tri, R, R] each.
    fn planes_graph<T: Scalar>(&self, sess: &mut Session<T>, f_out: Var) -> [Var; 3] {
        let k = self.cfg.plane_size;
        [0, 1, 2].map(|which| {
            let mut plane = plane_from_tokens(&mut sess.graph, f_out, which, k);
            for (i, &(w, b)) in self.deconvs.iter().enumerate() {
                let wv = sess.param(w);
                let bv = sess.param(b);
                plane = deconv2x(&mut sess.graph, plane, wv, bv);
                if i + 1 < self.deconvs.len() {
                    plane = sess.graph.relu(plane);
                }
            }
            plane
        })
    }

    /// Occupancy logits for voxel-space queries. Normalization uses
    /// d = (chunk, chunk*S, chunk) and clamps into [-1, 1]; each plane is
    /// sampled on its two axes and features concatenate before the linear
    /// head.
    pub fn occupancy_logits_graph<T: Scalar>(
        &self,
        sess: &mut Session<T>,
        f_out: Var,
        queries_vox: &[[f64; 3]],
    ) -> Result<Var> {
        let v = sess.graph.shape(f_out)[0];
        if v != self.cfg.latent_count() {
            return Err(Error::shape(format!(
                "triplane head expects {} tokens, got {v}",
                self.cfg.latent_count()
            )));
        }
        let c = self.chunk_size as f64;
        let d = [c, c * self.cfg.y_scale, c];
        let norm: Vec<[f64; 3]> = queries_vox
            .iter()
            .map(|q| {
                [
                    (2.0 * q[0] / d[0] - 1.0).clamp(-1.0, 1.0),
                    (2.0 * q[1] / d[1] - 1.0).clamp(-1.0, 1.0),
                    (2.0 * q[2] / d[2] - 1.0).clamp(-1.0, 1.0),
                ]
            })
            .collect();
        let planes = self.planes_graph(sess, f_out);
        // plane axes: xy, xz, yz
        let uv_xy: Vec<[f64; 2]> = norm.iter().map(|r| [r[0], r[1]]).collect();
        let uv_xz: Vec<[f64; 2]> = norm.iter().map(|r| [r[0], r[2]]).collect();
        let uv_yz: Vec<[f64; 2]> = norm.iter().map(|r| [r[1], r[2]]).collect();
        let f0 = bilinear_sample(&mut sess.graph, planes[0], &uv_xy);
        let f1 = bilinear_sample(&mut sess.graph, planes[1], &uv_xz);
        let f2 = bilinear_sample(&mut sess.graph, planes[2], &uv_yz);
        let feat = sess.graph.concat_cols(&[f0, f1, f2]);
        let logits = self.fc.forward(sess, feat);
        let n = queries_vox.len();
        Ok(sess.graph.reshape(logits, vec![n]))
    }
}

/// Per-chunk VAE loss with the triplane head in place of the vector-set
/// head; shares the encoder, decoder stack, and height/KL/consistency
/// terms with the base model. Queries arrive in voxel coordinates.
pub fn triplane_loss_graph<T: Scalar>(
    model: &VaeModel,
    tri: &TriplaneModel,
    sess: &mut Session<T>,
    item: &super::VaeTrainItem,
    queries_vox: &[[f64; 3]],
    rng: &mut Rng,
) -> Result<(Var, super::VaeLossParts)> {
    let enc_p = model.encode_graph(sess, &item.points_p, rng)?;
    let enc_q = model.encode_graph(sess, &item.points_q, rng)?;
    let kl_p = sess.graph.kl_normal(enc_p.mean, enc_p.logvar);
    let kl_q = sess.graph.kl_normal(enc_q.mean, enc_q.logvar);
    let kl_sum = sess.graph.add(kl_p, kl_q);
    let kl = sess.graph.scale(kl_sum, T::from_f64(0.5));
    let emb = {
        let d = sess.graph.sub(enc_p.z, enc_q.z);
        let sq = sess.graph.mul(d, d);
        sess.graph.mean_all(sq)
    };
    let f = model.decode_features_graph(sess, enc_p.z);
    let logits = tri.occupancy_logits_graph(sess, f, queries_vox)?;
    let labels = Tensor::new(
        vec![item.labels.len()],
        item.labels.iter().map(|&b| if b { T::ONE } else { T::ZERO }).collect(),
    )?;
    let ce = sess.graph.bce_with_logits(logits, &labels);
    let h_hat = model.predict_height_graph(sess, enc_p.z)?;
    let h_target = sess.constant(Tensor::new(vec![1], vec![T::from_f64(item.height_target)])?);
    let h_diff = sess.graph.sub(h_hat, h_target);
    let h_sq = sess.graph.mul(h_diff, h_diff);
    let height = sess.graph.mean_all(h_sq);

    let cfg = &model.cfg;
    let ce_w = sess.graph.scale(ce, T::from_f64(cfg.lambda_ce));
    let kl_w = sess.graph.scale(kl, T::from_f64(cfg.lambda_kl));
    let emb_w = sess.graph.scale(emb, T::from_f64(cfg.lambda_emb));
    let h_w = sess.graph.scale(height, T::from_f64(cfg.lambda_height));
    let s1 = sess.graph.add(ce_w, kl_w);
    let s2 = sess.graph.add(emb_w, h_w);
    let total = sess.graph.add(s1, s2);
    let parts = super::VaeLossParts {
        total: sess.value(total).item().to_f64(),
        ce: sess.value(ce).item().to_f64(),
        kl: sess.value(kl).item().to_f64(),
        emb: sess.value(emb).item().to_f64(),
        height: sess.value(height).item().to_f64(),
    };
    Ok((total, parts))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck::check_gradients;

    #[test]
    fn bilinear_matches_four_neighbor_oracle() {
        let mut rng = Rng::new(21);
        for _ in 0..5 {
            let (ch, h, w) = (3usize, 5usize, 7usize);
            let plane = Tensor::<f64>::randn(vec![ch, h, w], 1.0, &mut rng);
            let uv: Vec<[f64; 2]> =
                (0..40).map(|_| [rng.next_f64() * 2.0 - 1.0, rng.next_f64() * 2.0 - 1.0]).collect();
            let mut g = Graph::new();
            let pv = g.constant(plane.clone());
            let out = bilinear_sample(&mut g, pv, &uv);
            let got = g.value(out);
            for (i, &[u, v]) in uv.iter().enumerate() {
                let px = (u + 1.0) / 2.0 * (w - 1) as f64;
                let py = (v + 1.0) / 2.0 * (h - 1) as f64;
                let (x0, y0) = ((px.floor() as usize).min(w - 1), (py.floor() as usize).min(h - 1));
                let (x1, y1) = ((x0 + 1).min(w - 1), (y0 + 1).min(h - 1));
                let (fx, fy) = (px - x0 as f64, py - y0 as f64);
                for c in 0..ch {
                    let at = |y: usize, x: usize| plane.data()[(c * h + y) * w + x];
                    let want = at(y0, x0) * (1.0 - fx) * (1.0 - fy)
                        + at(y0, x1) * fx * (1.0 - fy)
                        + at(y1, x0) * (1.0 - fx) * fy
                        + at(y1, x1) * fx * fy;
                    assert!((got.data()[i * ch + c] - want).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn texel_centers_return_stored_features() {
        let mut rng = Rng::new(22);
        let (ch, h, w) = (2usize, 4usize, 4usize);
        let plane = Tensor::<f64>::randn(vec![ch, h, w], 1.0, &mut rng);
        // texel (x, y) sits at normalized (-1 + 2x/(w-1), -1 + 2y/(h-1))
        let mut uv = Vec::new();
        for y in 0..h {
            for x in 0..w {
                uv.push([
                    -1.0 + 2.0 * x as f64 / (w - 1) as f64,
                    -1.0 + 2.0 * y as f64 / (h - 1) as f64,
                ]);
            }
        }
        let mut g = Graph::new();
        let pv = g.constant(plane.clone());
        let out = bilinear_sample(&mut g, pv, &uv);
        let got = g.value(out);
        for y in 0..h {
            for x in 0..w {
                for c in 0..ch {
                    let want = plane.data()[(c * h + y) * w + x];
                    let v = got.data()[(y * w + x) * ch + c];
                    assert!((v - want).abs() < 1e-9, "texel ({x},{y}) channel {c}");
                }
            }
        }
    }

    #[test]
    fn bilinear_gradcheck() {
        let mut rng = Rng::new(24);
        let mut store = ParamStore::<f64>::new();
        store.add("plane", Tensor::randn(vec![2, 4, 5], 0.8, &mut rng));
        let uv: Vec<[f64; 2]> =
            (0..12).map(|_| [rng.next_f64() * 2.4 - 1.2, rng.next_f64() * 2.4 - 1.2]).collect();
        let report = check_gradients(
            &mut store,
            |sess| {
                let p = sess.param(sess.store().id("plane").unwrap());
                let y = bilinear_sample(&mut sess.graph, p, &uv);
                let sq = sess.graph.mul(y, y);
                sess.graph.mean_all(sq)
            },
            1e-4,
            24,
        );
        assert!(report.max_rel_err <= 1e-3, "{report:?}");
    }

    #[test]
    fn deconv_doubles_resolution_and_passes_gradcheck() {
        let mut rng = Rng::new(23);
        let mut store = ParamStore::<f64>::new();
        store.add("x", Tensor::randn(vec![2, 3, 3], 0.8, &mut rng));
        store.add("w", Tensor::randn(vec![2, 4 * 16], 0.3, &mut rng));
        store.add("b", Tensor::randn(vec![4], 0.3, &mut rng));
        {
            let mut sess = Session::new(&store);
            let x = sess.param(store.id("x").unwrap());
            let w = sess.param(store.id("w").unwrap());
            let b = sess.param(store.id("b").unwrap());
            let y = deconv2x(&mut sess.graph, x, w, b);
            assert_eq!(sess.graph.shape(y), &[4, 6, 6]);
        }
        let report = check_gradients(
            &mut store,
            |sess| {
                let x = sess.param(sess.store().id("x").unwrap());
                let w = sess.param(sess.store().id("w").unwrap());
                let b = sess.param(sess.store().id("b").unwrap());
                let y = deconv2x(&mut sess.graph, x, w, b);
                let sq = sess.graph.mul(y, y);
                sess.graph.mean_all(sq)
            },
            1e-4,
            24,
        );
        assert!(report.max_rel_err <= 1e-3, "{report:?}");
    }

    fn micro_tri() -> (super::super::VecsetVae<f64>, TriplaneModel) {
        let cfg = super::super::VaeConfig {
            latent_count: 12, // 3 * 2^2
            channels: 8,
            n_points: 12,
            decoder_layers: 1,
            heads: 2,
            n_freq: 2,
            chunk_size: 8,
            ..Default::default()
        };
        let mut vae = super::super::VecsetVae::<f64>::new(cfg, 31).unwrap();
        let tri_cfg = TriplaneConfig { y_scale: 4.0, plane_size: 2, channels: 6, deconv_layers: 1 };
        let mut rng = Rng::new(32);
        let tri = TriplaneModel::init(&mut vae.params, tri_cfg, 8, 12, 8, &mut rng).unwrap();
        (vae, tri)
    }

    #[test]
    fn wrong_latent_count_is_rejected() {
        let mut store = ParamStore::<f64>::new();
        let mut rng = Rng::new(33);
        let cfg = TriplaneConfig { y_scale: 6.0, plane_size: 4, channels: 8, deconv_layers: 1 };
        assert!(TriplaneModel::init(&mut store, cfg, 8, 17, 8, &mut rng).is_err());
    }

    #[test]
    fn clamped_y_queries_share_logits_vecset_does_not_clamp() {
        let (vae, tri) = micro_tri();
        let mut rng = Rng::new(34);
        let z = Tensor::<f64>::randn(vec![12, 8], 1.0, &mut rng);
        // two queries beyond the y scale bound (S*chunk = 32): both clamp
        let q1 = [3.0, 40.0, 5.0];
        let q2 = [3.0, 77.0, 5.0];
        let mut sess = Session::new(&vae.params);
        let zv = sess.constant(z.clone());
        let f = vae.model.decode_features_graph(&mut sess, zv);
        let logits = tri.occupancy_logits_graph(&mut sess, f, &[q1, q2]).unwrap();
        let out = sess.value(logits);
        assert!((out.data()[0] - out.data()[1]).abs() < 1e-12, "clamped queries must agree");

        // the vector-set head keeps them distinct (no clamping on y)
        let c = 8.0;
        let n1 = [2.0 * q1[0] / c - 1.0, 2.0 * q1[1] / c - 1.0, 2.0 * q1[2] / c - 1.0];
        let n2 = [2.0 * q2[0] / c - 1.0, 2.0 * q2[1] / c - 1.0, 2.0 * q2[2] / c - 1.0];
        let vecset_logits = {
            let mut sess = Session::new(&vae.params);
            let zv = sess.constant(z);
            let ctx = vae.model.decoded_context(&mut sess, zv);
            let l = vae.model.occupancy_logits_graph(&mut sess, ctx, &[n1, n2]).unwrap();
            sess.value(l).data().to_vec()
        };
        assert!(
            (vecset_logits[0] - vecset_logits[1]).abs() > 1e-9,
            "vecset logits should distinguish unclamped y"
        );
    }

    #[test]
    fn triplane_loss_gradcheck_micro() {
        let (mut vae, tri) = micro_tri();
        let mut rng = Rng::new(35);
        let cloud = |rng: &mut Rng| -> Vec<[f64; 3]> {
            (0..12)
                .map(|_| [rng.next_f64() * 2.0 - 1.0, rng.next_f64() * 2.0, rng.next_f64() * 2.0 - 1.0])
                .collect()
        };
        let queries_vox: Vec<[f64; 3]> = (0..10)
            .map(|_| [rng.next_f64() * 8.0, rng.next_f64() * 16.0, rng.next_f64() * 8.0])
            .collect();
        let item = super::super::VaeTrainItem {
            points_p: cloud(&mut rng),
            points_q: cloud(&mut rng),
            queries_norm: Vec::new(),
            labels: (0..10).map(|_| rng.next_f64() < 0.5).collect(),
            height_target: 0.3,
        };
        let model = vae.model.clone();
        let tri2 = tri.clone();
        let report = check_gradients(
            &mut vae.params,
            move |sess| {
                let mut rng = Rng::new(777);
                let (loss, _) =
                    triplane_loss_graph(&model, &tri2, sess, &item, &queries_vox, &mut rng).unwrap();
                loss
            },
            1e-4,
            5,
        );
        assert!(report.max_rel_err <= 1e-3, "{report:?}");
    }
}

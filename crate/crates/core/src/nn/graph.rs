//! Reverse-mode autodiff over a recorded op graph.
//!
//! A `Graph` is a per-forward-pass tape: every op appends a node holding the
//! computed value plus a boxed backward closure. `backward` walks the tape in
//! reverse, handing each node's output gradient to its closure, which pushes
//! contributions into parent accumulators. Ops that need intermediates for
//! the backward pass (softmax probabilities, normalization stats) move them
//! into the closure at record time.

use super::tensor::{Scalar, Tensor};

/// Handle to a node on the tape.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub struct Var(pub(crate) usize);

pub type Sink<'s, T> = dyn FnMut(usize, Tensor<T>) + 's;
pub type BackFn<T> = Box<dyn Fn(&[Tensor<T>], &Tensor<T>, &mut Sink<T>)>;

struct Node<T> {
    backward: Option<BackFn<T>>,
    needs_grad: bool,
}

pub struct Graph<T: Scalar> {
    values: Vec<Tensor<T>>,
    nodes: Vec<Node<T>>,
}

impl<T: Scalar> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Graph { values: Vec::new(), nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.values[v.0]
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.values[v.0].shape()
    }

    fn push(&mut self, value: Tensor<T>, needs_grad: bool, backward: Option<BackFn<T>>) -> Var {
        debug_assert!(value.all_finite(), "non-finite value produced by kernel op");
        self.values.push(value);
        self.nodes.push(Node { backward, needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn any_grad(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].needs_grad)
    }

    /// Leaf that does not receive gradients (input data, noise draws).
    pub fn constant(&mut self, t: Tensor<T>) -> Var {
        self.push(t, false, None)
    }

    /// Leaf that accumulates gradients (model parameters).
    pub fn param(&mut self, t: Tensor<T>) -> Var {
        self.push(t, true, None)
    }

    /// Extension point for ops defined outside this module. `parents` only
    /// determines gradient-needed propagation; the closure decides where
    /// gradient contributions actually flow (via `Sink`).
    pub fn custom(&mut self, value: Tensor<T>, parents: &[Var], backward: BackFn<T>) -> Var {
        let needs = self.any_grad(parents);
        self.push(value, needs, Some(backward))
    }

    /// Gradients of `loss` (a scalar node) w.r.t. every node on the tape.
    /// Entry `i` is `None` when node `i` does not require or receive grad.
    pub fn backward(&self, loss: Var) -> Vec<Option<Tensor<T>>> {
        assert_eq!(self.values[loss.0].len(), 1, "backward needs a scalar loss");
        let mut grads: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::scalar(T::ONE));
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            if let Some(back) = &self.nodes[i].backward {
                let nodes = &self.nodes;
                back(&self.values, &g, &mut |parent, contrib| {
                    if !nodes[parent].needs_grad {
                        return;
                    }
                    match &mut grads[parent] {
                        Some(acc) => acc.add_assign(&contrib),
                        slot @ None => *slot = Some(contrib),
                    }
                });
            }
            if self.nodes[i].needs_grad {
                grads[i] = Some(g);
            }
        }
        grads
    }

    // ----- elementwise -----

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let (ta, tb) = (&self.values[a.0], &self.values[b.0]);
        assert_eq!(ta.shape(), tb.shape(), "add shape mismatch");
        let mut out = ta.clone();
        out.add_assign(tb);
        let needs = self.any_grad(&[a, b]);
        self.push(
            out,
            needs,
            Some(Box::new(move |_vals, g, sink| {
                sink(a.0, g.clone());
                sink(b.0, g.clone());
            })),
        )
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let (ta, tb) = (&self.values[a.0], &self.values[b.0]);
        assert_eq!(ta.shape(), tb.shape(), "sub shape mismatch");
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| x - y).collect();
        let out = Tensor::new(ta.shape().to_vec(), data).unwrap();
        let needs = self.any_grad(&[a, b]);
        self.push(
            out,
            needs,
            Some(Box::new(move |_vals, g, sink| {
                sink(a.0, g.clone());
                sink(b.0, g.map(|x| -x));
            })),
        )
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let (ta, tb) = (&self.values[a.0], &self.values[b.0]);
        assert_eq!(ta.shape(), tb.shape(), "mul shape mismatch");
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| x * y).collect();
        let out = Tensor::new(ta.shape().to_vec(), data).unwrap();
        let needs = self.any_grad(&[a, b]);
        self.push(
            out,
            needs,
            Some(Box::new(move |vals, g, sink| {
                let (ta, tb) = (&vals[a.0], &vals[b.0]);
                let ga = Tensor::new(
                    g.shape().to_vec(),
                    g.data().iter().zip(tb.data()).map(|(&gg, &y)| gg * y).collect(),
                )
                .unwrap();
                let gb = Tensor::new(
                    g.shape().to_vec(),
                    g.data().iter().zip(ta.data()).map(|(&gg, &x)| gg * x).collect(),
                )
                .unwrap();
                sink(a.0, ga);
                sink(b.0, gb);
            })),
        )
    }

    pub fn scale(&mut self, a: Var, k: T) -> Var {
        let out = self.values[a.0].map(|x| x * k);
        let needs = self.nodes[a.0].needs_grad;
        self.push(
            out,
            needs,
            Some(Box::new(move |_vals, g, sink| {
                sink(a.0, g.map(|x| x * k));
            })),
        )
    }

    pub fn add_scalar(&mut self, a: Var, k: T) -> Var {
        let out = self.values[a.0].map(|x| x + k);
        let needs = self.nodes[a.0].needs_grad;
        self.push(
            out,
            needs,
            Some(Box::new(move |_vals, g, sink| {
                sink(a.0, g.clone());
            })),
        )
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let out = self.values[a.0].map(|x| x.exp());
        let needs = self.nodes[a.0].needs_grad;
        let saved = out.clone();
        self.push(
            out,
            needs,
            Some(Box::new(move |_vals, g, sink| {
                let data = g.data().iter().zip(saved.data()).map(|(&gg, &e)| gg * e).collect();
                sink(a.0, Tensor::new(g.shape().to_vec(), data).unwrap());
            })),
        )
    }

    pub fn gelu(&mut self, a: Var) -> Var {
        let c = T::from_f64(0.797_884_560_802_865_4); // sqrt(2/pi)
        let k3 = T::from_f64(0.044715);
        let half = T::from_f64(0.5);
        let one = T::ONE;
        let three = T::from_f64(3.0);
        let out = self.values[a.0].map(|x| {
            let u = c * (x + k3 * x * x * x);
            half * x * (one + u.tanh())
        });
        let needs = self.nodes[a.0].needs_grad;
        self.push(
            out,
            needs,
            Some(Box::new(move |vals, g, sink| {
                let x = &vals[a.0];
                let data = g
                    .data()
                    .iter()
                    .zip(x.data())
                    .map(|(&gg, &x)| {
                        let u = c * (x + k3 * x * x * x);
                        let t = u.tanh();
                        let du = c * (one + three * k3 * x * x);
                        gg * (half * (one + t) + half * x * (one - t * t) * du)
                    })
                    .collect();
                sink(a.0, Tensor::new(g.shape().to_vec(), data).unwrap());
            })),
        )
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let out = self.values[a.0].map(|x| if x > T::ZERO { x } else { T::ZERO });
        let needs = self.nodes[a.0].needs_grad;
        self.push(
            out,
            needs,
            Some(Box::new(move |vals, g, sink| {
                let x = &vals[a.0];
                let data = g
                    .data()
                    .iter()
                    .zip(x.data())
                    .map(|(&gg, &x)| if x > T::ZERO { gg } else { T::ZERO })
                    .collect();
                sink(a.0, Tensor::new(g.shape().to_vec(), data).unwrap());
            })),
        )
    }

    // ----- shape plumbing -----

    pub fn reshape(&mut self, a: Var, shape: Vec<usize>) -> Var {
        let out = self.values[a.0].clone().reshaped(shape).expect("reshape size mismatch");
        let needs = self.nodes[a.0].needs_grad;
        self.push(
            out,
            needs,
            Some(Box::new(move |vals, g, sink| {
                let back = g.clone().reshaped(vals[a.0].shape().to_vec()).unwrap();
                sink(a.0, back);
            })),
        )
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty());
        let n = self.values[parts[0].0].rows();
        let widths: Vec<usize> = parts.iter().map(|v| self.values[v.0].cols()).collect();
        for v in parts {
            assert_eq!(self.values[v.0].rows(), n, "concat_cols row mismatch");
        }
        let total: usize = widths.iter().sum();
        let mut data = vec![T::ZERO; n * total];
        let mut off = 0;
        for (v, &w) in parts.iter().zip(&widths) {
            let src = self.values[v.0].data();
            for r in 0..n {
                data[r * total + off..r * total + off + w].copy_from_slice(&src[r * w..(r + 1) * w]);
            }
            off += w;
        }
        let out = Tensor::new(vec![n, total], data).unwrap();
        let needs = self.any_grad(parts);
        let parts: Vec<usize> = parts.iter().map(|v| v.0).collect();
        self.push(
            out,
            needs,
            Some(Box::new(move |_vals, g, sink| {
                let mut off = 0;
                for (&p, &w) in parts.iter().zip(&widths) {
                    let mut part = vec![T::ZERO; n * w];
                    for r in 0..n {
                        part[r * w..(r + 1) * w]
                            .copy_from_slice(&g.data()[r * total + off..r * total + off + w]);
                    }
                    sink(p, Tensor::new(vec![n, w], part).unwrap());
                    off += w;
                }
            })),
        )
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Var {
        let t = &self.values[a.0];
        let (n, c) = (t.rows(), t.cols());
        assert!(start + len <= c, "slice_cols out of range");
        let mut data = vec![T::ZERO; n * len];
        for r in 0..n {
            data[r * len..(r + 1) * len].copy_from_slice(&t.data()[r * c + start..r * c + start + len]);
        }
        let out = Tensor::new(vec![n, len], data).unwrap();
        let needs = self.nodes[a.0].needs_grad;
        self.push(
            out,
            needs,
            Some(Box::new(move |vals, g, sink| {
                let c = vals[a.0].cols();
                let n = vals[a.0].rows();
                let mut back = vec![T::ZERO; n * c];
                for r in 0..n {
                    back[r * c + start..r * c + start + len]
                        .copy_from_slice(&g.data()[r * len..(r + 1) * len]);
                }
                sink(a.0, Tensor::new(vals[a.0].shape().to_vec(), back).unwrap());
            })),
        )
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty());
        let c = self.values[parts[0].0].cols();
        let mut rows = 0;
        for v in parts {
            assert_eq!(self.values[v.0].cols(), c, "concat_rows col mismatch");
            rows += self.values[v.0].rows();
        }
        let mut data = Vec::with_capacity(rows * c);
        for v in parts {
            data.extend_from_slice(self.values[v.0].data());
        }
        let out = Tensor::new(vec![rows, c], data).unwrap();
        let needs = self.any_grad(parts);
        let sizes: Vec<usize> = parts.iter().map(|v| self.values[v.0].len()).collect();
        let shapes: Vec<Vec<usize>> = parts.iter().map(|v| self.values[v.0].shape().to_vec()).collect();
        let parts: Vec<usize> = parts.iter().map(|v| v.0).collect();
        self.push(
            out,
            needs,
            Some(Box::new(move |_vals, g, sink| {
                let mut off = 0;
                for ((&p, &sz), shape) in parts.iter().zip(&sizes).zip(&shapes) {
                    let part = g.data()[off..off + sz].to_vec();
                    sink(p, Tensor::new(shape.clone(), part).unwrap());
                    off += sz;
                }
            })),
        )
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Var {
        let t = &self.values[a.0];
        let (n, c) = (t.rows(), t.cols());
        assert!(start + len <= n, "slice_rows out of range");
        let data = t.data()[start * c..(start + len) * c].to_vec();
        let out = Tensor::new(vec![len, c], data).unwrap();
        let needs = self.nodes[a.0].needs_grad;
        self.push(
            out,
            needs,
            Some(Box::new(move |vals, g, sink| {
                let (n, c) = (vals[a.0].rows(), vals[a.0].cols());
                let mut back = vec![T::ZERO; n * c];
                back[start * c..(start + len) * c].copy_from_slice(g.data());
                sink(a.0, Tensor::new(vals[a.0].shape().to_vec(), back).unwrap());
            })),
        )
    }

    // ----- linear algebra -----

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let out = self.values[a.0].matmul(&self.values[b.0]);
        let needs = self.any_grad(&[a, b]);
        self.push(
            out,
            needs,
            Some(Box::new(move |vals, g, sink| {
                // dA = g @ B^T ; dB = A^T @ g
                sink(a.0, g.matmul_nt(&vals[b.0]));
                sink(b.0, vals[a.0].matmul_tn(g));
            })),
        )
    }

    /// x: [n, c] plus a broadcast bias [c] (or [1, c]).
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Var {
        let (tx, tb) = (&self.values[x.0], &self.values[bias.0]);
        let (n, c) = (tx.rows(), tx.cols());
        assert_eq!(tb.len(), c, "bias width mismatch");
        let mut out = tx.clone();
        for r in 0..n {
            for j in 0..c {
                let v = out.data()[r * c + j] + tb.data()[j];
                out.data_mut()[r * c + j] = v;
            }
        }
        let needs = self.any_grad(&[x, bias]);
        self.push(
            out,
            needs,
            Some(Box::new(move |vals, g, sink| {
                sink(x.0, g.clone());
                let c = vals[bias.0].len();
                let n = g.len() / c;
                let mut gb = vec![T::ZERO; c];
                for r in 0..n {
                    for j in 0..c {
                        gb[j] += g.data()[r * c + j];
                    }
                }
                sink(bias.0, Tensor::new(vals[bias.0].shape().to_vec(), gb).unwrap());
            })),
        )
    }

    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Var {
        let y = self.matmul(x, w);
        self.add_bias(y, b)
    }

    // ----- reductions & losses -----

    pub fn sum_all(&mut self, a: Var) -> Var {
        let s = self.values[a.0].data().iter().fold(T::ZERO, |acc, &x| acc + x);
        let needs = self.nodes[a.0].needs_grad;
        self.push(
            Tensor::scalar(s),
            needs,
            Some(Box::new(move |vals, g, sink| {
                let gv = g.item();
                sink(a.0, Tensor::full(vals[a.0].shape().to_vec(), gv));
            })),
        )
    }

    pub fn mean_all(&mut self, a: Var) -> Var {
        let n = self.values[a.0].len();
        let s = self.sum_all(a);
        self.scale(s, T::from_f64(1.0 / n as f64))
    }

    /// Mean squared error between same-shape tensors.
    pub fn mse(&mut self, a: Var, b: Var) -> Var {
        let d = self.sub(a, b);
        let sq = self.mul(d, d);
        self.mean_all(sq)
    }

    /// Numerically stable mean binary cross-entropy on logits.
    /// `labels` is constant (no gradient path).
    pub fn bce_with_logits(&mut self, logits: Var, labels: &Tensor<T>) -> Var {
        let lt = &self.values[logits.0];
        assert_eq!(lt.len(), labels.len(), "bce labels length mismatch");
        let n = lt.len();
        let inv_n = T::from_f64(1.0 / n as f64);
        let mut acc = T::ZERO;
        for (&x, &y) in lt.data().iter().zip(labels.data()) {
            // max(x,0) - x*y + ln(1 + exp(-|x|))
            let mx = if x > T::ZERO { x } else { T::ZERO };
            acc += mx - x * y + (T::ONE + (-x.abs()).exp()).ln();
        }
        let needs = self.nodes[logits.0].needs_grad;
        let labels = labels.clone();
        self.push(
            Tensor::scalar(acc * inv_n),
            needs,
            Some(Box::new(move |vals, g, sink| {
                let gv = g.item() * inv_n;
                let x = &vals[logits.0];
                let data = x
                    .data()
                    .iter()
                    .zip(labels.data())
                    .map(|(&x, &y)| {
                        let sig = T::ONE / (T::ONE + (-x).exp());
                        gv * (sig - y)
                    })
                    .collect();
                sink(logits.0, Tensor::new(x.shape().to_vec(), data).unwrap());
            })),
        )
    }

    /// KL(N(mean, exp(logvar)) || N(0, I)), mean-reduced over elements:
    /// -0.5 * mean(1 + logvar - mean^2 - exp(logvar)).
    pub fn kl_normal(&mut self, mean: Var, logvar: Var) -> Var {
        let (tm, tl) = (&self.values[mean.0], &self.values[logvar.0]);
        assert_eq!(tm.shape(), tl.shape(), "kl shape mismatch");
        let n = tm.len();
        let inv_n = T::from_f64(1.0 / n as f64);
        let half = T::from_f64(0.5);
        let mut acc = T::ZERO;
        for (&m, &lv) in tm.data().iter().zip(tl.data()) {
            acc += T::ONE + lv - m * m - lv.exp();
        }
        let value = -(half * inv_n) * acc;
        let needs = self.any_grad(&[mean, logvar]);
        self.push(
            Tensor::scalar(value),
            needs,
            Some(Box::new(move |vals, g, sink| {
                let gv = g.item();
                let tm = &vals[mean.0];
                let tl = &vals[logvar.0];
                let gm = tm.map(|m| gv * inv_n * m);
                let gl = tl.map(|lv| gv * half * inv_n * (lv.exp() - T::ONE));
                sink(mean.0, gm);
                sink(logvar.0, gl);
            })),
        )
    }

    // ----- attention -----

    /// Multi-head scaled dot-product attention on pre-projected q/k/v.
    /// q: [n, c], k: [m, c], v: [m, c]; channels split into `heads`.
    pub fn attention(&mut self, q: Var, k: Var, v: Var, heads: usize) -> Var {
        let (tq, tk, tv) = (&self.values[q.0], &self.values[k.0], &self.values[v.0]);
        let (n, c) = (tq.rows(), tq.cols());
        let m = tk.rows();
        assert_eq!(tk.cols(), c, "attention k width");
        assert_eq!(tv.rows(), m, "attention v rows");
        assert_eq!(tv.cols(), c, "attention v width");
        assert!(heads > 0 && c % heads == 0, "channels {c} not divisible by heads {heads}");
        let dh = c / heads;
        let scale = T::from_f64(1.0 / (dh as f64).sqrt());

        // probs[h] is the softmax over context rows for head h: [n, m]
        let mut probs: Vec<Tensor<T>> = Vec::with_capacity(heads);
        let mut out = Tensor::zeros(vec![n, c]);
        for h in 0..heads {
            let off = h * dh;
            // scores = Qh @ Kh^T * scale
            let mut scores = vec![T::ZERO; n * m];
            for i in 0..n {
                for j in 0..m {
                    let mut acc = T::ZERO;
                    for d in 0..dh {
                        acc += tq.data()[i * c + off + d] * tk.data()[j * c + off + d];
                    }
                    scores[i * m + j] = acc * scale;
                }
            }
            // row softmax
            for i in 0..n {
                let row = &mut scores[i * m..(i + 1) * m];
                let mut mx = row[0];
                for &x in row.iter() {
                    if x > mx {
                        mx = x;
                    }
                }
                let mut sum = T::ZERO;
                for x in row.iter_mut() {
                    *x = (*x - mx).exp();
                    sum += *x;
                }
                let inv = T::ONE / sum;
                for x in row.iter_mut() {
                    *x = *x * inv;
                }
            }
            // out_h = P @ Vh
            for i in 0..n {
                for j in 0..m {
                    let p = scores[i * m + j];
                    for d in 0..dh {
                        let x = out.data()[i * c + off + d] + p * tv.data()[j * c + off + d];
                        out.data_mut()[i * c + off + d] = x;
                    }
                }
            }
            probs.push(Tensor::new(vec![n, m], scores).unwrap());
        }

        let needs = self.any_grad(&[q, k, v]);
        self.push(
            out,
            needs,
            Some(Box::new(move |vals, g, sink| {
                let (tq, tk, tv) = (&vals[q.0], &vals[k.0], &vals[v.0]);
                let mut gq = Tensor::zeros(tq.shape().to_vec());
                let mut gk = Tensor::zeros(tk.shape().to_vec());
                let mut gv = Tensor::zeros(tv.shape().to_vec());
                for h in 0..heads {
                    let off = h * dh;
                    let p = &probs[h];
                    // dV_h += P^T @ dOut_h
                    for j in 0..m {
                        for i in 0..n {
                            let pij = p.data()[i * m + j];
                            for d in 0..dh {
                                let x = gv.data()[j * c + off + d] + pij * g.data()[i * c + off + d];
                                gv.data_mut()[j * c + off + d] = x;
                            }
                        }
                    }
                    // dP = dOut_h @ V_h^T ; dS = P .* (dP - rowdot(dP, P))
                    for i in 0..n {
                        let mut dp = vec![T::ZERO; m];
                        for (j, dpj) in dp.iter_mut().enumerate() {
                            let mut acc = T::ZERO;
                            for d in 0..dh {
                                acc += g.data()[i * c + off + d] * tv.data()[j * c + off + d];
                            }
                            *dpj = acc;
                        }
                        let mut dot = T::ZERO;
                        for j in 0..m {
                            dot += dp[j] * p.data()[i * m + j];
                        }
                        for j in 0..m {
                            let ds = p.data()[i * m + j] * (dp[j] - dot) * scale;
                            // dQ_h[i] += ds * K_h[j]; dK_h[j] += ds * Q_h[i]
                            for d in 0..dh {
                                let xq = gq.data()[i * c + off + d] + ds * tk.data()[j * c + off + d];
                                gq.data_mut()[i * c + off + d] = xq;
                                let xk = gk.data()[j * c + off + d] + ds * tq.data()[i * c + off + d];
                                gk.data_mut()[j * c + off + d] = xk;
                            }
                        }
                    }
                }
                sink(q.0, gq);
                sink(k.0, gk);
                sink(v.0, gv);
            })),
        )
    }

    /// Per-row layer normalization with learned gain/bias of width c.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var) -> Var {
        let tx = &self.values[x.0];
        let (n, c) = (tx.rows(), tx.cols());
        assert_eq!(self.values[gain.0].len(), c, "layer_norm gain width");
        assert_eq!(self.values[bias.0].len(), c, "layer_norm bias width");
        let eps = T::from_f64(1e-5);
        let inv_c = T::from_f64(1.0 / c as f64);

        let mut out = Tensor::zeros(vec![n, c]);
        let mut xhat = Tensor::zeros(vec![n, c]);
        let mut inv_std = vec![T::ZERO; n];
        {
            let g = self.values[gain.0].data();
            let b = self.values[bias.0].data();
            for r in 0..n {
                let row = &tx.data()[r * c..(r + 1) * c];
                let mut mean = T::ZERO;
                for &v in row {
                    mean += v;
                }
                mean = mean * inv_c;
                let mut var = T::ZERO;
                for &v in row {
                    let d = v - mean;
                    var += d * d;
                }
                var = var * inv_c;
                let istd = T::ONE / (var + eps).sqrt();
                inv_std[r] = istd;
                for j in 0..c {
                    let xh = (row[j] - mean) * istd;
                    xhat.data_mut()[r * c + j] = xh;
                    out.data_mut()[r * c + j] = g[j] * xh + b[j];
                }
            }
        }

        let needs = self.any_grad(&[x, gain, bias]);
        self.push(
            out,
            needs,
            Some(Box::new(move |vals, g, sink| {
                let c_t = vals[gain.0].data();
                let n = g.rows();
                let c = g.cols();
                let mut gx = Tensor::zeros(vals[x.0].shape().to_vec());
                let mut ggain = vec![T::ZERO; c];
                let mut gbias = vec![T::ZERO; c];
                for r in 0..n {
                    let istd = inv_std[r];
                    // h = dy * gain; dx = istd * (h - mean(h) - xhat * mean(h*xhat))
                    let mut mean_h = T::ZERO;
                    let mut mean_hx = T::ZERO;
                    for j in 0..c {
                        let dy = g.data()[r * c + j];
                        let xh = xhat.data()[r * c + j];
                        ggain[j] += dy * xh;
                        gbias[j] += dy;
                        let h = dy * c_t[j];
                        mean_h += h;
                        mean_hx += h * xh;
                    }
                    mean_h = mean_h * inv_c;
                    mean_hx = mean_hx * inv_c;
                    for j in 0..c {
                        let dy = g.data()[r * c + j];
                        let xh = xhat.data()[r * c + j];
                        let h = dy * c_t[j];
                        gx.data_mut()[r * c + j] = istd * (h - mean_h - xh * mean_hx);
                    }
                }
                sink(x.0, gx);
                sink(gain.0, Tensor::new(vals[gain.0].shape().to_vec(), ggain).unwrap());
                sink(bias.0, Tensor::new(vals[bias.0].shape().to_vec(), gbias).unwrap());
            })),
        )
    }
}

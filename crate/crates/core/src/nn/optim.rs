//! Named parameter storage with Adam updates.

use std::collections::HashMap;

use super::graph::{Graph, Var};
use super::tensor::{Scalar, Tensor};

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub struct ParamId(pub(crate) usize);

pub(crate) struct ParamEntry<T> {
    pub name: String,
    pub tensor: Tensor<T>,
    pub grad: Tensor<T>,
    adam_m: Tensor<T>,
    adam_v: Tensor<T>,
    pub trainable: bool,
}

/// Every learnable tensor of a model, addressable by name. Gradients
/// accumulate here between `zero_grads` and `adam_step`; a training step is
/// single-writer, while read-only forward passes may share the store freely.
pub struct ParamStore<T: Scalar> {
    entries: Vec<ParamEntry<T>>,
    index: HashMap<String, usize>,
    step: u64,
}

impl<T: Scalar> Default for ParamStore<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        ParamStore { entries: Vec::new(), index: HashMap::new(), step: 0 }
    }

    pub fn add(&mut self, name: impl Into<String>, tensor: Tensor<T>) -> ParamId {
        self.insert(name.into(), tensor, true)
    }

    /// Non-trainable tensor that still travels with checkpoints
    /// (normalization statistics and the like).
    pub fn add_buffer(&mut self, name: impl Into<String>, tensor: Tensor<T>) -> ParamId {
        self.insert(name.into(), tensor, false)
    }

    fn insert(&mut self, name: String, tensor: Tensor<T>, trainable: bool) -> ParamId {
        assert!(!self.index.contains_key(&name), "duplicate parameter {name}");
        let shape = tensor.shape().to_vec();
        let id = self.entries.len();
        self.index.insert(name.clone(), id);
        self.entries.push(ParamEntry {
            name,
            grad: Tensor::zeros(shape.clone()),
            adam_m: Tensor::zeros(shape.clone()),
            adam_v: Tensor::zeros(shape),
            tensor,
            trainable,
        });
        ParamId(id)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied().map(ParamId)
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.entries[id.0].name
    }

    pub fn tensor(&self, id: ParamId) -> &Tensor<T> {
        &self.entries[id.0].tensor
    }

    pub fn tensor_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.entries[id.0].tensor
    }

    pub fn grad(&self, id: ParamId) -> &Tensor<T> {
        &self.entries[id.0].grad
    }

    pub fn param_count(&self) -> usize {
        self.entries.iter().filter(|e| e.trainable).map(|e| e.tensor.len()).sum()
    }

    pub fn iter_named(&self) -> impl Iterator<Item = (&str, &Tensor<T>, bool)> {
        self.entries.iter().map(|e| (e.name.as_str(), &e.tensor, e.trainable))
    }

    pub fn zero_grads(&mut self) {
        for e in &mut self.entries {
            e.grad.fill(T::ZERO);
        }
    }

    pub fn accumulate(&mut self, grads: &GradMap<T>) {
        for (id, g) in &grads.0 {
            self.entries[id.0].grad.add_assign(g);
        }
    }

    /// Accumulates `k * grads`, the per-item weight in a batch mean.
    pub fn accumulate_scaled(&mut self, grads: &GradMap<T>, k: T) {
        for (id, g) in &grads.0 {
            let dst = &mut self.entries[id.0].grad;
            for (a, &b) in dst.data_mut().iter_mut().zip(g.data()) {
                *a += k * b;
            }
        }
    }

    /// Bias-corrected Adam. Deterministic: update order is registration order.
    pub fn adam_step(&mut self, lr: f64, beta1: f64, beta2: f64, eps: f64) {
        self.step += 1;
        let t = self.step as i32;
        let b1 = T::from_f64(beta1);
        let b2 = T::from_f64(beta2);
        let one_m_b1 = T::from_f64(1.0 - beta1);
        let one_m_b2 = T::from_f64(1.0 - beta2);
        let corr1 = T::from_f64(1.0 / (1.0 - beta1.powi(t)));
        let corr2 = T::from_f64(1.0 / (1.0 - beta2.powi(t)));
        let lr = T::from_f64(lr);
        let eps = T::from_f64(eps);
        for e in &mut self.entries {
            if !e.trainable {
                continue;
            }
            let n = e.tensor.len();
            for i in 0..n {
                let g = e.grad.data()[i];
                let m = b1 * e.adam_m.data()[i] + one_m_b1 * g;
                let v = b2 * e.adam_v.data()[i] + one_m_b2 * g * g;
                e.adam_m.data_mut()[i] = m;
                e.adam_v.data_mut()[i] = v;
                let m_hat = m * corr1;
                let v_hat = v * corr2;
                let upd = lr * m_hat / (v_hat.sqrt() + eps);
                let x = e.tensor.data()[i] - upd;
                e.tensor.data_mut()[i] = x;
            }
        }
    }

    pub fn to_f64_store(&self) -> ParamStore<f64> {
        let mut out = ParamStore::new();
        for e in &self.entries {
            let t = e.tensor.to_f64_tensor();
            if e.trainable {
                out.add(e.name.clone(), t);
            } else {
                out.add_buffer(e.name.clone(), t);
            }
        }
        out
    }
}

/// Per-parameter gradients produced by one backward pass. Kept separate from
/// the store so data-parallel workers can each produce one and the trainer
/// can reduce them in a fixed order.
pub struct GradMap<T>(Vec<(ParamId, Tensor<T>)>);

impl<T: Scalar> GradMap<T> {
    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Tensor<T>)> {
        self.0.iter().map(|(id, t)| (*id, t))
    }
}

/// One forward/backward pass: a graph plus the store leases it holds.
/// Leasing a parameter clones its tensor onto the tape exactly once.
pub struct Session<'s, T: Scalar> {
    pub graph: Graph<T>,
    store: &'s ParamStore<T>,
    leased: HashMap<usize, Var>,
    order: Vec<ParamId>,
}

impl<'s, T: Scalar> Session<'s, T> {
    pub fn new(store: &'s ParamStore<T>) -> Self {
        Session { graph: Graph::new(), store, leased: HashMap::new(), order: Vec::new() }
    }

    pub fn store(&self) -> &ParamStore<T> {
        self.store
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(&v) = self.leased.get(&id.0) {
            return v;
        }
        let v = self.graph.param(self.store.entries[id.0].tensor.clone());
        self.leased.insert(id.0, v);
        self.order.push(id);
        v
    }

    pub fn constant(&mut self, t: Tensor<T>) -> Var {
        self.graph.constant(t)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        self.graph.value(v)
    }

    /// Backward from a scalar loss; returns gradients for every leased
    /// parameter (zero tensors for parameters off the loss path).
    pub fn backward(&self, loss: Var) -> GradMap<T> {
        let grads = self.graph.backward(loss);
        let mut out = Vec::with_capacity(self.order.len());
        for &id in &self.order {
            let var = self.leased[&id.0];
            let g = grads[var.0]
                .clone()
                .unwrap_or_else(|| Tensor::zeros(self.store.entries[id.0].tensor.shape().to_vec()));
            out.push((id, g));
        }
        GradMap(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        let mut store = ParamStore::<f64>::new();
        let id = store.add("w", Tensor::full(vec![3], 1.5));
        store.zero_grads();
        store.adam_step(0.1, 0.9, 0.999, 1e-8);
        for &x in store.tensor(id).data() {
            assert_eq!(x, 1.5);
        }
    }

    #[test]
    fn first_step_matches_closed_form() {
        // From zero state with gradient g: m_hat = g, v_hat = g^2,
        // delta = -lr * g / (|g| + eps).
        let mut store = ParamStore::<f64>::new();
        let id = store.add("w", Tensor::full(vec![2], 0.0));
        store.zero_grads();
        let g = [0.3, -1.7];
        for (i, &gi) in g.iter().enumerate() {
            store.entries[id.0].grad.data_mut()[i] = gi;
        }
        let (lr, eps) = (0.05, 1e-8);
        store.adam_step(lr, 0.9, 0.999, eps);
        for (i, &gi) in g.iter().enumerate() {
            let want = -lr * gi / (gi.abs() + eps);
            assert!((store.tensor(id).data()[i] - want).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_gradient_limit_is_signed_lr() {
        let mut store = ParamStore::<f64>::new();
        let id = store.add("w", Tensor::full(vec![1], 0.0));
        let lr = 0.01;
        let mut prev = 0.0;
        let mut last_delta = 0.0;
        for _ in 0..400 {
            store.zero_grads();
            store.entries[id.0].grad.data_mut()[0] = -4.2;
            store.adam_step(lr, 0.9, 0.999, 1e-8);
            let cur = store.tensor(id).data()[0];
            last_delta = cur - prev;
            prev = cur;
        }
        // gradient negative -> parameter climbs by ~lr per step
        assert!((last_delta - lr).abs() < 1e-4, "delta {last_delta}");
    }

    #[test]
    fn session_leases_once_and_collects_grads() {
        let mut store = ParamStore::<f64>::new();
        let id = store.add("w", Tensor::new(vec![2], vec![2.0, 3.0]).unwrap());
        let mut sess = Session::new(&store);
        let w1 = sess.param(id);
        let w2 = sess.param(id);
        assert_eq!(w1, w2);
        // loss = sum(w * w) -> dL/dw = 2w
        let prod = sess.graph.mul(w1, w2);
        let loss = sess.graph.sum_all(prod);
        let grads = sess.backward(loss);
        let (gid, g) = grads.iter().next().unwrap();
        assert_eq!(gid, id);
        assert_eq!(g.data(), &[4.0, 6.0]);
    }
}

//! Central finite-difference gradient checking against the tape.
//!
//! The contract for every differentiable kernel: analytic gradients agree
//! with central differences at relative error <= 1e-3 in 64-bit.

use super::optim::{ParamStore, Session};
use super::tensor::Tensor;
use crate::nn::Var;

/// Result of one gradient check: worst relative error and where it occurred.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub worst_param: String,
    pub worst_index: usize,
    pub checked: usize,
}

/// Compares backward-pass gradients with central finite differences for
/// every trainable parameter in `store`. `build_loss` must be a pure
/// function of the store contents (re-seed any sampling inside).
///
/// `step` is the finite-difference step (1e-4 per contract); `max_per_param`
/// bounds the number of coordinates probed per tensor (probed from a
/// deterministic stride so big tensors stay cheap).
pub fn check_gradients<F>(
    store: &mut ParamStore<f64>,
    build_loss: F,
    step: f64,
    max_per_param: usize,
) -> GradCheckReport
where
    F: Fn(&mut Session<f64>) -> Var,
{
    let analytic: Vec<(String, Tensor<f64>)> = {
        let mut sess = Session::new(store);
        let loss = build_loss(&mut sess);
        let grads = sess.backward(loss);
        grads
            .iter()
            .map(|(id, g)| (store.name(id).to_string(), g.clone()))
            .collect()
    };

    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        worst_param: String::new(),
        worst_index: 0,
        checked: 0,
    };

    for (name, grad) in &analytic {
        let id = store.id(name).expect("leased param exists");
        let n = store.tensor(id).len();
        let stride = (n / max_per_param).max(1);
        let mut i = 0;
        while i < n {
            let orig = store.tensor(id).data()[i];
            store.tensor_mut(id).data_mut()[i] = orig + step;
            let f_plus = eval_loss(store, &build_loss);
            store.tensor_mut(id).data_mut()[i] = orig - step;
            let f_minus = eval_loss(store, &build_loss);
            store.tensor_mut(id).data_mut()[i] = orig;

            let numeric = (f_plus - f_minus) / (2.0 * step);
            let ana = grad.data()[i];
            // absolute floor keeps O(step^2) truncation noise on near-zero
            // entries from masquerading as gradient error
            let denom = numeric.abs().max(ana.abs()).max(1e-4);
            let mut rel = (numeric - ana).abs() / denom;
            if rel > 5e-4 {
                // disambiguate truncation error from a wrong gradient by
                // re-estimating with a smaller step
                let h = step / 5.0;
                store.tensor_mut(id).data_mut()[i] = orig + h;
                let fp = eval_loss(store, &build_loss);
                store.tensor_mut(id).data_mut()[i] = orig - h;
                let fm = eval_loss(store, &build_loss);
                store.tensor_mut(id).data_mut()[i] = orig;
                let refined = (fp - fm) / (2.0 * h);
                let denom = refined.abs().max(ana.abs()).max(1e-4);
                rel = rel.min((refined - ana).abs() / denom);
            }
            if rel > report.max_rel_err {
                report.max_rel_err = rel;
                report.worst_param = name.clone();
                report.worst_index = i;
            }
            report.checked += 1;
            i += stride;
        }
    }
    report
}

fn eval_loss<F>(store: &ParamStore<f64>, build_loss: &F) -> f64
where
    F: Fn(&mut Session<f64>) -> Var,
{
    let mut sess = Session::new(store);
    let loss = build_loss(&mut sess);
    sess.value(loss).item()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::layers::{CrossAttentionLayer, TransformerBlock};
    use crate::rng::Rng;

    #[test]
    fn transformer_block_passes_contract() {
        let mut rng = Rng::new(21);
        let mut store = ParamStore::<f64>::new();
        let block = TransformerBlock::init(&mut store, "blk", 8, 2, &mut rng);
        let x = Tensor::<f64>::randn(vec![4, 8], 0.8, &mut rng);
        let report = check_gradients(
            &mut store,
            |sess| {
                let xv = sess.constant(x.clone());
                let y = block.forward(sess, xv);
                let sq = sess.graph.mul(y, y);
                sess.graph.mean_all(sq)
            },
            1e-4,
            16,
        );
        assert!(report.max_rel_err <= 1e-3, "worst {report:?}");
    }

    #[test]
    fn cross_attention_passes_contract() {
        let mut rng = Rng::new(22);
        let mut store = ParamStore::<f64>::new();
        let ca = CrossAttentionLayer::init(&mut store, "ca", 10, 6, 8, 4, &mut rng);
        let q = Tensor::<f64>::randn(vec![3, 10], 0.8, &mut rng);
        let ctx = Tensor::<f64>::randn(vec![5, 6], 0.8, &mut rng);
        let report = check_gradients(
            &mut store,
            |sess| {
                let qv = sess.constant(q.clone());
                let cv = sess.constant(ctx.clone());
                let y = ca.forward(sess, qv, cv).unwrap();
                let sq = sess.graph.mul(y, y);
                sess.graph.mean_all(sq)
            },
            1e-4,
            16,
        );
        assert!(report.max_rel_err <= 1e-3, "worst {report:?}");
    }
}

//! Central finite-difference gradient verification.
//!
//! The checker rebuilds the forward pass from scratch for every perturbed
//! parameter entry, so the closure must be a pure function of the store
//! (disable dropout or reuse a fixed mask when checking stochastic paths).

use super::tape::{NodeId, Tape};
use super::ParamStore;
use crate::error::Result;

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    /// Largest error over every checked entry, relative with a unit floor:
    /// |analytic - fd| / max(1, |analytic|, |fd|).
    pub max_rel_err: f64,
    /// Parameter and flat index where the largest error occurred.
    pub worst: String,
    /// Total scalar entries compared.
    pub checked: usize,
}

/// Compares the tape's analytic gradients against central finite differences
/// for every parameter in the store.
///
/// `build` must construct the forward pass and return the scalar loss node.
pub fn gradient_check<F>(
    store: &mut ParamStore,
    eps: f64,
    build: F,
) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &ParamStore) -> Result<NodeId>,
{
    store.zero_grads();
    let mut tape = Tape::new();
    let loss = build(&mut tape, store)?;
    tape.backward(loss)?;
    tape.accumulate_grads(store);

    let analytic: Vec<(String, Vec<f64>)> = store
        .names()
        .iter()
        .map(|n| (n.clone(), store.grad(n).data().to_vec()))
        .collect();

    let eval = |store: &ParamStore| -> Result<f64> {
        let mut tape = Tape::new();
        let loss = build(&mut tape, store)?;
        Ok(tape.value(loss).item())
    };

    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        worst: String::new(),
        checked: 0,
    };
    for (name, grads) in &analytic {
        for k in 0..grads.len() {
            let orig = store.value(name).data()[k];
            store.value_mut(name).data_mut()[k] = orig + eps;
            let plus = eval(store)?;
            store.value_mut(name).data_mut()[k] = orig - eps;
            let minus = eval(store)?;
            store.value_mut(name).data_mut()[k] = orig;

            let fd = (plus - minus) / (2.0 * eps);
            let a = grads[k];
            let rel = (a - fd).abs() / a.abs().max(fd.abs()).max(1.0);
            report.checked += 1;
            if rel > report.max_rel_err {
                report.max_rel_err = rel;
                report.worst = format!("{name}[{k}]: analytic {a}, fd {fd}");
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Act, Dense, Lstm, Tensor2};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_tensor(rows: usize, cols: usize, rng: &mut impl rand::Rng) -> Tensor2 {
        Tensor2::from_vec(rows, cols, (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect())
    }

    #[test]
    fn dense_gradients_match_fd() {
        for seed in 0..5 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let layer = Dense::new("d", 4, 3, Act::Tanh);
            let mut store = ParamStore::new();
            layer.init(&mut store, &mut rng);
            let x = random_tensor(2, 4, &mut rng);
            let target = random_tensor(2, 3, &mut rng);
            let report = gradient_check(&mut store, 1e-5, |tape, store| {
                let xn = tape.leaf(x.clone());
                let y = layer.forward(tape, store, xn)?;
                Ok(tape.mse(y, &target))
            })
            .unwrap();
            assert!(report.max_rel_err < 1e-4, "seed {seed}: {}", report.worst);
        }
    }

    #[test]
    fn lstm_gradients_match_fd() {
        for seed in 0..3 {
            let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
            let layer = Lstm::new("l", 3, 4);
            let mut store = ParamStore::new();
            layer.init(&mut store, &mut rng);
            let steps: Vec<Tensor2> = (0..5).map(|_| random_tensor(2, 3, &mut rng)).collect();
            let report = gradient_check(&mut store, 1e-5, |tape, store| {
                let ids: Vec<_> = steps.iter().map(|s| tape.leaf(s.clone())).collect();
                let hidden = layer.forward_steps(tape, store, &ids)?;
                let stacked = tape.concat_rows(&hidden);
                let sq = tape.mul(stacked, stacked);
                Ok(tape.mean(sq))
            })
            .unwrap();
            assert!(report.max_rel_err < 1e-4, "seed {seed}: {}", report.worst);
        }
    }

    #[test]
    fn cross_entropy_gradients_match_fd_tightly() {
        for seed in 0..5 {
            let mut rng = ChaCha8Rng::seed_from_u64(200 + seed);
            let mut store = ParamStore::new();
            store.insert("logits", random_tensor(4, 6, &mut rng));
            let targets = vec![0usize, 3, 5, 2];
            let report = gradient_check(&mut store, 1e-5, |tape, store| {
                let z = tape.param(store, "logits");
                Ok(tape.cross_entropy(z, &targets))
            })
            .unwrap();
            assert!(report.max_rel_err < 1e-6, "seed {seed}: {}", report.worst);
        }
    }

    #[test]
    fn mse_gradients_match_fd_tightly() {
        let mut rng = ChaCha8Rng::seed_from_u64(300);
        let mut store = ParamStore::new();
        store.insert("x", random_tensor(3, 4, &mut rng));
        let target = random_tensor(3, 4, &mut rng);
        let report = gradient_check(&mut store, 1e-5, |tape, store| {
            let x = tape.param(store, "x");
            Ok(tape.mse(x, &target))
        })
        .unwrap();
        assert!(report.max_rel_err < 1e-6, "{}", report.worst);
    }
}

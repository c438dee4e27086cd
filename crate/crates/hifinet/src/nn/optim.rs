//! Named parameter storage with paired gradients and Adam state.

use std::collections::BTreeMap;

use rand::Rng;

use super::tensor::Tensor2;

#[derive(Debug)]
struct Entry {
    value: Tensor2,
    grad: Tensor2,
    m: Tensor2,
    v: Tensor2,
}

/// Every parameter tensor of a model, keyed by name. Iteration order is the
/// sorted name order, which keeps updates and checkpoints deterministic.
#[derive(Debug)]
pub struct ParamStore {
    entries: BTreeMap<String, Entry>,
    step: u64,
}

/// Adam hyperparameters; `Default` gives lr 1e-3, beta1 0.9, beta2 0.999.
#[derive(Debug, Clone, Copy)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        AdamConfig {
            lr,
            ..Default::default()
        }
    }
}

impl ParamStore {
    pub fn new() -> Self {
        ParamStore {
            entries: BTreeMap::new(),
            step: 0,
        }
    }

    /// Registers a parameter with an explicit initial value. Panics if the
    /// name is taken; parameter names are a flat global namespace.
    pub fn insert(&mut self, name: &str, value: Tensor2) {
        let (r, c) = value.shape();
        let prev = self.entries.insert(
            name.to_string(),
            Entry {
                value,
                grad: Tensor2::zeros(r, c),
                m: Tensor2::zeros(r, c),
                v: Tensor2::zeros(r, c),
            },
        );
        assert!(prev.is_none(), "duplicate parameter {name}");
    }

    /// Registers a parameter drawn from U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
    pub fn insert_uniform(
        &mut self,
        name: &str,
        rows: usize,
        cols: usize,
        fan_in: usize,
        rng: &mut impl Rng,
    ) {
        let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
        let data: Vec<f64> = (0..rows * cols)
            .map(|_| rng.gen_range(-bound..bound))
            .collect();
        self.insert(name, Tensor2::from_vec(rows, cols, data));
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn value(&self, name: &str) -> &Tensor2 {
        &self.entries.get(name).unwrap_or_else(|| panic!("unknown parameter {name}")).value
    }

    pub fn value_mut(&mut self, name: &str) -> &mut Tensor2 {
        &mut self
            .entries
            .get_mut(name)
            .unwrap_or_else(|| panic!("unknown parameter {name}"))
            .value
    }

    pub fn grad(&self, name: &str) -> &Tensor2 {
        &self.entries.get(name).unwrap_or_else(|| panic!("unknown parameter {name}")).grad
    }

    pub fn grad_mut(&mut self, name: &str) -> &mut Tensor2 {
        &mut self
            .entries
            .get_mut(name)
            .unwrap_or_else(|| panic!("unknown parameter {name}"))
            .grad
    }

    /// Parameter names in deterministic (sorted) order.
    pub fn names(&self) -> Vec<String> {
        self.entries.keys().cloned().collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total scalar parameter count.
    pub fn num_values(&self) -> usize {
        self.entries.values().map(|e| e.value.len()).sum()
    }

    pub fn zero_grads(&mut self) {
        for e in self.entries.values_mut() {
            e.grad.fill(0.0);
        }
    }

    /// One Adam update with bias correction over every parameter.
    pub fn adam_step(&mut self, cfg: &AdamConfig) {
        self.step += 1;
        let t = self.step as f64;
        let bc1 = 1.0 - cfg.beta1.powf(t);
        let bc2 = 1.0 - cfg.beta2.powf(t);
        for e in self.entries.values_mut() {
            for k in 0..e.value.len() {
                let g = e.grad.data()[k];
                let m = cfg.beta1 * e.m.data()[k] + (1.0 - cfg.beta1) * g;
                let v = cfg.beta2 * e.v.data()[k] + (1.0 - cfg.beta2) * g * g;
                e.m.data_mut()[k] = m;
                e.v.data_mut()[k] = v;
                let mhat = m / bc1;
                let vhat = v / bc2;
                e.value.data_mut()[k] -= cfg.lr * mhat / (vhat.sqrt() + cfg.eps);
            }
        }
    }

    /// Deep copy of values only (fresh optimizer state), e.g. for keeping the
    /// best-validation snapshot during training.
    pub fn snapshot_values(&self) -> Vec<(String, Tensor2)> {
        self.entries
            .iter()
            .map(|(k, e)| (k.clone(), e.value.clone()))
            .collect()
    }

    pub fn restore_values(&mut self, snapshot: &[(String, Tensor2)]) {
        for (name, value) in snapshot {
            *self.value_mut(name) = value.clone();
        }
    }

    /// FNV-1a style checksum of a parameter's bytes; used by tests to prove
    /// frozen layers stay untouched.
    pub fn checksum(&self, name: &str) -> u64 {
        let mut h: u64 = 0xcbf29ce484222325;
        for v in self.value(name).data() {
            for b in v.to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x100000001b3);
            }
        }
        h
    }
}

impl Default for ParamStore {
    fn default() -> Self {
        Self::new()
    }
}

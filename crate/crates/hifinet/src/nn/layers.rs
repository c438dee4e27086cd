//! Dense and LSTM layer builders. A layer owns no tensors; it knows its
//! shapes and the parameter names it reads from a [`ParamStore`], and emits
//! tape ops when asked for a forward pass.

use rand::Rng;

use super::tape::{Act, NodeId, Tape};
use super::tensor::Tensor2;
use super::ParamStore;
use crate::error::{Error, Result};

/// Fully connected layer `y = act(x W + b)`.
#[derive(Debug, Clone)]
pub struct Dense {
    pub name: String,
    pub d_in: usize,
    pub d_out: usize,
    pub act: Act,
}

impl Dense {
    pub fn new(name: impl Into<String>, d_in: usize, d_out: usize, act: Act) -> Self {
        Dense {
            name: name.into(),
            d_in,
            d_out,
            act,
        }
    }

    fn w(&self) -> String {
        format!("{}.w", self.name)
    }

    fn b(&self) -> String {
        format!("{}.b", self.name)
    }

    /// Fan-in scaled uniform init for W, zeros for b.
    pub fn init(&self, store: &mut ParamStore, rng: &mut impl Rng) {
        store.insert_uniform(&self.w(), self.d_in, self.d_out, self.d_in, rng);
        store.insert(&self.b(), Tensor2::zeros(1, self.d_out));
    }

    /// Registers explicit values, for identity-style initializations.
    pub fn init_with(&self, store: &mut ParamStore, w: Tensor2, b: Tensor2) {
        assert_eq!(w.shape(), (self.d_in, self.d_out));
        assert_eq!(b.shape(), (1, self.d_out));
        store.insert(&self.w(), w);
        store.insert(&self.b(), b);
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: NodeId) -> Result<NodeId> {
        let xv = tape.value(x);
        if xv.cols() != self.d_in {
            return Err(Error::Shape(format!(
                "dense {}: input has {} columns, weight {} expects {}",
                self.name,
                xv.cols(),
                self.w(),
                self.d_in
            )));
        }
        let rows = xv.rows();
        let w = tape.param(store, &self.w());
        let b = tape.param(store, &self.b());
        let xw = tape.matmul(x, w);
        let bb = tape.broadcast_row(b, rows);
        let z = tape.add(xw, bb);
        Ok(tape.activation(z, self.act))
    }

    /// Inference-only forward on plain tensors.
    pub fn apply(&self, store: &ParamStore, x: &Tensor2) -> Result<Tensor2> {
        let mut tape = Tape::new();
        let xn = tape.leaf(x.clone());
        let y = self.forward(&mut tape, store, xn)?;
        Ok(tape.value(y).clone())
    }
}

/// Single LSTM layer with the standard four-gate cell and zero initial state.
///
/// Parameters per gate g in {i, f, g, o}: input map `w_g` (d_in x d_h),
/// recurrent map `u_g` (d_h x d_h), bias `b_g` (1 x d_h).
#[derive(Debug, Clone)]
pub struct Lstm {
    pub name: String,
    pub d_in: usize,
    pub d_h: usize,
}

const GATES: [&str; 4] = ["i", "f", "g", "o"];

impl Lstm {
    pub fn new(name: impl Into<String>, d_in: usize, d_h: usize) -> Self {
        Lstm {
            name: name.into(),
            d_in,
            d_h,
        }
    }

    pub fn param_name(&self, kind: &str, gate: &str) -> String {
        format!("{}.{}_{}", self.name, kind, gate)
    }

    pub fn init(&self, store: &mut ParamStore, rng: &mut impl Rng) {
        for gate in GATES {
            store.insert_uniform(
                &self.param_name("w", gate),
                self.d_in,
                self.d_h,
                self.d_in,
                rng,
            );
            store.insert_uniform(
                &self.param_name("u", gate),
                self.d_h,
                self.d_h,
                self.d_h,
                rng,
            );
            store.insert(&self.param_name("b", gate), Tensor2::zeros(1, self.d_h));
        }
    }

    /// All parameter names of this layer, for freezing checks and checkpoints.
    pub fn param_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        for gate in GATES {
            names.push(self.param_name("w", gate));
            names.push(self.param_name("u", gate));
            names.push(self.param_name("b", gate));
        }
        names
    }

    /// Runs the recurrence over `steps`, each a batch-rows x d_in node.
    /// Returns one hidden node (batch-rows x d_h) per step.
    pub fn forward_steps(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        steps: &[NodeId],
    ) -> Result<Vec<NodeId>> {
        if steps.is_empty() {
            return Err(Error::Shape(format!("lstm {}: empty sequence", self.name)));
        }
        let batch = tape.value(steps[0]).rows();
        for &s in steps {
            let v = tape.value(s);
            if v.cols() != self.d_in || v.rows() != batch {
                return Err(Error::Shape(format!(
                    "lstm {}: step tensor is {}x{}, expected {}x{}",
                    self.name,
                    v.rows(),
                    v.cols(),
                    batch,
                    self.d_in
                )));
            }
        }

        let mut w = Vec::new();
        let mut u = Vec::new();
        let mut b = Vec::new();
        for gate in GATES {
            w.push(tape.param(store, &self.param_name("w", gate)));
            u.push(tape.param(store, &self.param_name("u", gate)));
            b.push(tape.param(store, &self.param_name("b", gate)));
        }

        let mut h = tape.leaf(Tensor2::zeros(batch, self.d_h));
        let mut c = tape.leaf(Tensor2::zeros(batch, self.d_h));
        let mut hidden = Vec::with_capacity(steps.len());
        for &x in steps {
            let mut gates = Vec::with_capacity(4);
            for k in 0..4 {
                let xw = tape.matmul(x, w[k]);
                let hu = tape.matmul(h, u[k]);
                let s = tape.add(xw, hu);
                let bb = tape.broadcast_row(b[k], batch);
                let z = tape.add(s, bb);
                let act = if GATES[k] == "g" { Act::Tanh } else { Act::Sigmoid };
                gates.push(tape.activation(z, act));
            }
            let (i_g, f_g, g_g, o_g) = (gates[0], gates[1], gates[2], gates[3]);
            let fc = tape.mul(f_g, c);
            let ig = tape.mul(i_g, g_g);
            c = tape.add(fc, ig);
            let ct = tape.activation(c, Act::Tanh);
            h = tape.mul(o_g, ct);
            hidden.push(h);
        }
        Ok(hidden)
    }
}

/// Runs one sequence (T x d_in) through an LSTM layer and returns the full
/// hidden sequence (T x d_h) and the last hidden state.
pub fn lstm_forward(
    layer: &Lstm,
    store: &ParamStore,
    seq: &Tensor2,
) -> Result<(Tensor2, Vec<f64>)> {
    let mut tape = Tape::new();
    let steps: Vec<NodeId> = (0..seq.rows())
        .map(|t| tape.leaf(Tensor2::row_vec(seq.row(t))))
        .collect();
    let hidden = layer.forward_steps(&mut tape, store, &steps)?;
    let stacked = tape.concat_rows(&hidden);
    let out = tape.value(stacked).clone();
    let last = out.row(out.rows() - 1).to_vec();
    Ok((out, last))
}

/// Dense forward on a plain tensor without touching a caller's tape.
pub fn dense_forward(layer: &Dense, store: &ParamStore, x: &Tensor2) -> Result<Tensor2> {
    layer.apply(store, x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn dense_identity_passthrough() {
        let layer = Dense::new("d", 3, 3, Act::Identity);
        let mut store = ParamStore::new();
        let mut eye = Tensor2::zeros(3, 3);
        for i in 0..3 {
            eye.set(i, i, 1.0);
        }
        layer.init_with(&mut store, eye, Tensor2::zeros(1, 3));
        let x = Tensor2::from_vec(2, 3, vec![1.0, -2.0, 0.5, 3.0, 0.0, -1.0]);
        let y = layer.apply(&store, &x).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn relu_definition() {
        let layer = Dense::new("d", 2, 2, Act::Relu);
        let mut store = ParamStore::new();
        let mut eye = Tensor2::zeros(2, 2);
        eye.set(0, 0, 1.0);
        eye.set(1, 1, 1.0);
        layer.init_with(&mut store, eye, Tensor2::zeros(1, 2));
        let y = layer
            .apply(&store, &Tensor2::from_vec(1, 2, vec![-1.0, 2.0]))
            .unwrap();
        assert_eq!(y.data(), &[0.0, 2.0]);
    }

    #[test]
    fn dense_shape_error_names_tensor() {
        let layer = Dense::new("head", 4, 2, Act::Identity);
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        layer.init(&mut store, &mut rng);
        let err = layer.apply(&store, &Tensor2::zeros(1, 3)).unwrap_err();
        assert!(err.to_string().contains("head.w"));
    }

    #[test]
    fn lstm_zero_weights_give_zero_hidden() {
        let layer = Lstm::new("l", 2, 3);
        let mut store = ParamStore::new();
        for gate in GATES {
            store.insert(&layer.param_name("w", gate), Tensor2::zeros(2, 3));
            store.insert(&layer.param_name("u", gate), Tensor2::zeros(3, 3));
            store.insert(&layer.param_name("b", gate), Tensor2::zeros(1, 3));
        }
        let seq = Tensor2::from_vec(4, 2, vec![1.0, -1.0, 2.0, 0.5, 0.0, 0.0, 3.0, 1.0]);
        let (hidden, last) = lstm_forward(&layer, &store, &seq).unwrap();
        assert!(hidden.data().iter().all(|&v| v == 0.0));
        assert!(last.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn lstm_single_step_matches_hand_computation() {
        // Scalar cell with hand-set gates:
        // i = sigma(x*wi + bi), f = sigma(...), g = tanh(x*wg), o = sigma(x*wo)
        // c1 = i*g (c0 = 0), h1 = o * tanh(c1).
        let layer = Lstm::new("l", 1, 1);
        let mut store = ParamStore::new();
        let vals = [
            ("w_i", 0.5),
            ("w_f", -0.3),
            ("w_g", 0.8),
            ("w_o", 1.1),
            ("u_i", 0.0),
            ("u_f", 0.0),
            ("u_g", 0.0),
            ("u_o", 0.0),
            ("b_i", 0.2),
            ("b_f", 0.1),
            ("b_g", -0.1),
            ("b_o", 0.3),
        ];
        for (k, v) in vals {
            store.insert(&format!("l.{k}"), Tensor2::scalar(v));
        }
        let x = 1.5;
        let sigma = |z: f64| 1.0 / (1.0 + (-z).exp());
        let i = sigma(x * 0.5 + 0.2);
        let g = (x * 0.8 - 0.1).tanh();
        let o = sigma(x * 1.1 + 0.3);
        let c1 = i * g;
        let expected = o * c1.tanh();

        let (_, last) = lstm_forward(&layer, &store, &Tensor2::scalar(x)).unwrap();
        assert!((last[0] - expected).abs() < 1e-12);
    }

    #[test]
    fn lstm_rejects_dimension_mismatch() {
        let layer = Lstm::new("l", 2, 3);
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        layer.init(&mut store, &mut rng);
        let seq = Tensor2::zeros(4, 3);
        assert!(lstm_forward(&layer, &store, &seq).is_err());
    }
}

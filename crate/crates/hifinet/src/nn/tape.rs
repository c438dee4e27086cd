//! Reverse-mode automatic differentiation over `Tensor2` values.
//!
//! A [`Tape`] records every operation of a forward pass; [`Tape::backward`]
//! replays the record in reverse, accumulating exact gradients into each
//! node. Leaves created through [`Tape::param`] remember the parameter name
//! they were bound from, so [`Tape::accumulate_grads`] can write gradients
//! back into a [`ParamStore`](super::ParamStore).
//!
//! The op set is exactly what the models in this crate need: matrix product,
//! element-wise arithmetic, row/column broadcasting, the activations, row
//! softmax (plain and adjacency-masked), row max, layer normalization,
//! concatenation, inverted dropout, mean reduction, and a fused softmax
//! cross-entropy.

use rand::Rng;

use super::tensor::Tensor2;
use super::ParamStore;
use crate::error::{Error, Result};

/// Activation kinds available to dense layers and attention scoring.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Act {
    Identity,
    Relu,
    /// Negative slope fixed at 0.2.
    LeakyRelu,
    Tanh,
    Sigmoid,
}

impl Act {
    fn apply(self, x: f64) -> f64 {
        match self {
            Act::Identity => x,
            Act::Relu => x.max(0.0),
            Act::LeakyRelu => {
                if x >= 0.0 {
                    x
                } else {
                    0.2 * x
                }
            }
            Act::Tanh => x.tanh(),
            Act::Sigmoid => 1.0 / (1.0 + (-x).exp()),
        }
    }

    /// Derivative in terms of input `x` and output `y`.
    fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Act::Identity => 1.0,
            Act::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Act::LeakyRelu => {
                if x >= 0.0 {
                    1.0
                } else {
                    0.2
                }
            }
            Act::Tanh => 1.0 - y * y,
            Act::Sigmoid => y * (1.0 - y),
        }
    }
}

/// Handle to a node on the tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(usize);

enum Op {
    Leaf,
    MatMul(usize, usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    /// Repeat a 1xC row vector across `rows` rows.
    BroadcastRow(usize),
    /// Repeat an Rx1 column vector across `cols` columns.
    BroadcastCol(usize),
    Transpose(usize),
    Activation(usize, Act),
    SoftmaxRows(usize),
    /// Softmax restricted to entries where `mask` is nonzero; zero elsewhere.
    /// Masked-out entries carry probability zero, which also zeroes their
    /// gradient, so the mask itself is not needed for the backward pass.
    MaskedSoftmaxRows(usize),
    /// Per-row maximum; argmax indices recorded for the backward pass.
    RowMax(usize, Vec<usize>),
    LayerNorm {
        x: usize,
        gain: usize,
        bias: usize,
    },
    ConcatCols(usize, usize),
    ConcatRows(Vec<usize>),
    /// Element-wise product with a fixed inverted-dropout mask.
    Dropout(usize, Tensor2),
    MulScalar(usize, f64),
    Mean(usize),
    /// Mean softmax cross-entropy over rows against integer targets.
    CrossEntropy(usize, Vec<usize>),
}

struct Node {
    value: Tensor2,
    grad: Tensor2,
    op: Op,
}

/// Records a forward computation and differentiates it in reverse.
pub struct Tape {
    nodes: Vec<Node>,
    /// (parameter name, leaf node) bindings made through [`Tape::param`].
    bindings: Vec<(String, NodeId)>,
}

const LN_EPS: f64 = 1e-5;

impl Tape {
    pub fn new() -> Self {
        Tape {
            nodes: Vec::new(),
            bindings: Vec::new(),
        }
    }

    fn push(&mut self, value: Tensor2, op: Op) -> NodeId {
        let grad = Tensor2::zeros(value.rows(), value.cols());
        self.nodes.push(Node { value, grad, op });
        NodeId(self.nodes.len() - 1)
    }

    /// Constant/input leaf.
    pub fn leaf(&mut self, value: Tensor2) -> NodeId {
        self.push(value, Op::Leaf)
    }

    /// Leaf bound to a named parameter; its value is copied out of the store
    /// and its gradient flows back through [`Tape::accumulate_grads`].
    pub fn param(&mut self, store: &ParamStore, name: &str) -> NodeId {
        let value = store.value(name).clone();
        let id = self.push(value, Op::Leaf);
        self.bindings.push((name.to_string(), id));
        id
    }

    pub fn value(&self, id: NodeId) -> &Tensor2 {
        &self.nodes[id.0].value
    }

    pub fn grad(&self, id: NodeId) -> &Tensor2 {
        &self.nodes[id.0].grad
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.nodes[a.0].value.matmul(&self.nodes[b.0].value);
        self.push(v, Op::MatMul(a.0, b.0))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.nodes[a.0].value.zip_map(&self.nodes[b.0].value, |x, y| x + y);
        self.push(v, Op::Add(a.0, b.0))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.nodes[a.0].value.zip_map(&self.nodes[b.0].value, |x, y| x - y);
        self.push(v, Op::Sub(a.0, b.0))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.nodes[a.0].value.zip_map(&self.nodes[b.0].value, |x, y| x * y);
        self.push(v, Op::Mul(a.0, b.0))
    }

    pub fn broadcast_row(&mut self, a: NodeId, rows: usize) -> NodeId {
        let src = &self.nodes[a.0].value;
        assert_eq!(src.rows(), 1, "broadcast_row expects a 1xC vector");
        let mut v = Tensor2::zeros(rows, src.cols());
        for r in 0..rows {
            v.row_mut(r).copy_from_slice(src.row(0));
        }
        self.push(v, Op::BroadcastRow(a.0))
    }

    pub fn broadcast_col(&mut self, a: NodeId, cols: usize) -> NodeId {
        let src = &self.nodes[a.0].value;
        assert_eq!(src.cols(), 1, "broadcast_col expects an Rx1 vector");
        let mut v = Tensor2::zeros(src.rows(), cols);
        for r in 0..src.rows() {
            let x = src.get(r, 0);
            v.row_mut(r).iter_mut().for_each(|o| *o = x);
        }
        self.push(v, Op::BroadcastCol(a.0))
    }

    pub fn transpose(&mut self, a: NodeId) -> NodeId {
        let v = self.nodes[a.0].value.transpose();
        self.push(v, Op::Transpose(a.0))
    }

    pub fn activation(&mut self, a: NodeId, act: Act) -> NodeId {
        let v = self.nodes[a.0].value.map(|x| act.apply(x));
        self.push(v, Op::Activation(a.0, act))
    }

    pub fn softmax_rows(&mut self, a: NodeId) -> NodeId {
        let src = &self.nodes[a.0].value;
        let mut v = Tensor2::zeros(src.rows(), src.cols());
        for r in 0..src.rows() {
            softmax_into(src.row(r), v.row_mut(r));
        }
        self.push(v, Op::SoftmaxRows(a.0))
    }

    /// Row softmax over entries where `mask != 0`. Requires every row of the
    /// mask to have at least one nonzero entry.
    pub fn masked_softmax_rows(&mut self, a: NodeId, mask: &Tensor2) -> Result<NodeId> {
        let src = &self.nodes[a.0].value;
        assert_eq!(src.shape(), mask.shape(), "mask shape mismatch");
        let mut v = Tensor2::zeros(src.rows(), src.cols());
        for r in 0..src.rows() {
            let row = src.row(r);
            let mrow = mask.row(r);
            let mut mx = f64::NEG_INFINITY;
            for (x, m) in row.iter().zip(mrow) {
                if *m != 0.0 && *x > mx {
                    mx = *x;
                }
            }
            if mx == f64::NEG_INFINITY {
                return Err(Error::Shape(format!(
                    "empty neighborhood: mask row {r} has no entries"
                )));
            }
            let mut denom = 0.0;
            for (j, (x, m)) in row.iter().zip(mrow).enumerate() {
                if *m != 0.0 {
                    let e = (x - mx).exp();
                    v.set(r, j, e);
                    denom += e;
                }
            }
            for j in 0..row.len() {
                let p = v.get(r, j) / denom;
                v.set(r, j, p);
            }
        }
        Ok(self.push(v, Op::MaskedSoftmaxRows(a.0)))
    }

    /// Per-row maximum as an Rx1 column.
    pub fn row_max(&mut self, a: NodeId) -> NodeId {
        let src = &self.nodes[a.0].value;
        let mut v = Tensor2::zeros(src.rows(), 1);
        let mut arg = Vec::with_capacity(src.rows());
        for r in 0..src.rows() {
            let row = src.row(r);
            let (mut best_j, mut best) = (0usize, row[0]);
            for (j, &x) in row.iter().enumerate().skip(1) {
                if x > best {
                    best = x;
                    best_j = j;
                }
            }
            v.set(r, 0, best);
            arg.push(best_j);
        }
        self.push(v, Op::RowMax(a.0, arg))
    }

    /// Per-row normalization with learnable 1xC gain and bias.
    pub fn layer_norm(&mut self, x: NodeId, gain: NodeId, bias: NodeId) -> NodeId {
        let src = &self.nodes[x.0].value;
        let g = &self.nodes[gain.0].value;
        let b = &self.nodes[bias.0].value;
        assert_eq!(g.shape(), (1, src.cols()), "layer_norm gain shape");
        assert_eq!(b.shape(), (1, src.cols()), "layer_norm bias shape");
        let mut v = Tensor2::zeros(src.rows(), src.cols());
        for r in 0..src.rows() {
            let row = src.row(r);
            let (mu, var) = row_mean_var(row);
            let inv = 1.0 / (var + LN_EPS).sqrt();
            for j in 0..row.len() {
                let xh = (row[j] - mu) * inv;
                v.set(r, j, g.get(0, j) * xh + b.get(0, j));
            }
        }
        self.push(
            v,
            Op::LayerNorm {
                x: x.0,
                gain: gain.0,
                bias: bias.0,
            },
        )
    }

    pub fn concat_cols(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        assert_eq!(ta.rows(), tb.rows(), "concat_cols row mismatch");
        let mut v = Tensor2::zeros(ta.rows(), ta.cols() + tb.cols());
        for r in 0..ta.rows() {
            v.row_mut(r)[..ta.cols()].copy_from_slice(ta.row(r));
            v.row_mut(r)[ta.cols()..].copy_from_slice(tb.row(r));
        }
        self.push(v, Op::ConcatCols(a.0, b.0))
    }

    /// Stack same-width nodes vertically.
    pub fn concat_rows(&mut self, parts: &[NodeId]) -> NodeId {
        assert!(!parts.is_empty());
        let cols = self.nodes[parts[0].0].value.cols();
        let total: usize = parts.iter().map(|p| self.nodes[p.0].value.rows()).sum();
        let mut v = Tensor2::zeros(total, cols);
        let mut at = 0;
        for p in parts {
            let t = &self.nodes[p.0].value;
            assert_eq!(t.cols(), cols, "concat_rows col mismatch");
            for r in 0..t.rows() {
                v.row_mut(at).copy_from_slice(t.row(r));
                at += 1;
            }
        }
        self.push(v, Op::ConcatRows(parts.iter().map(|p| p.0).collect()))
    }

    /// Inverted dropout with a freshly drawn mask. `rate` of zero is the
    /// identity; the kept entries are scaled by 1/(1-rate).
    pub fn dropout(&mut self, a: NodeId, rate: f64, rng: &mut impl Rng) -> NodeId {
        assert!((0.0..1.0).contains(&rate), "dropout rate must be in [0,1)");
        let src = &self.nodes[a.0].value;
        if rate == 0.0 {
            let v = src.clone();
            let mask = Tensor2::filled(src.rows(), src.cols(), 1.0);
            return self.push(v, Op::Dropout(a.0, mask));
        }
        let keep = 1.0 - rate;
        let mask = Tensor2::from_vec(
            src.rows(),
            src.cols(),
            (0..src.len())
                .map(|_| if rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 })
                .collect(),
        );
        let v = src.zip_map(&mask, |x, m| x * m);
        self.push(v, Op::Dropout(a.0, mask))
    }

    pub fn mul_scalar(&mut self, a: NodeId, s: f64) -> NodeId {
        let v = self.nodes[a.0].value.map(|x| x * s);
        self.push(v, Op::MulScalar(a.0, s))
    }

    /// Mean over all entries, as a 1x1 node.
    pub fn mean(&mut self, a: NodeId) -> NodeId {
        let src = &self.nodes[a.0].value;
        let n = src.len() as f64;
        let v = Tensor2::scalar(src.data().iter().sum::<f64>() / n);
        self.push(v, Op::Mean(a.0))
    }

    /// Mean squared error against a constant target.
    pub fn mse(&mut self, a: NodeId, target: &Tensor2) -> NodeId {
        let t = self.leaf(target.clone());
        let d = self.sub(a, t);
        let sq = self.mul(d, d);
        self.mean(sq)
    }

    /// Mean softmax cross-entropy of `logits` rows against class indices.
    pub fn cross_entropy(&mut self, logits: NodeId, targets: &[usize]) -> NodeId {
        let src = &self.nodes[logits.0].value;
        assert_eq!(src.rows(), targets.len(), "cross_entropy target count");
        let mut total = 0.0;
        for (r, &y) in targets.iter().enumerate() {
            let row = src.row(r);
            assert!(y < row.len(), "target class out of range");
            let mx = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = row.iter().map(|x| (x - mx).exp()).sum::<f64>().ln() + mx;
            total += lse - row[y];
        }
        let v = Tensor2::scalar(total / targets.len() as f64);
        self.push(v, Op::CrossEntropy(logits.0, targets.to_vec()))
    }

    /// Propagates gradients from a scalar node back to every leaf.
    pub fn backward(&mut self, loss: NodeId) -> Result<()> {
        let out = &self.nodes[loss.0].value;
        if out.len() != 1 {
            return Err(Error::Shape(format!(
                "backward expects a scalar loss, got {}x{}",
                out.rows(),
                out.cols()
            )));
        }
        if !out.item().is_finite() {
            return Err(Error::Divergence(format!("non-finite loss {}", out.item())));
        }
        for node in &mut self.nodes {
            node.grad.fill(0.0);
        }
        self.nodes[loss.0].grad.fill(1.0);

        for i in (0..self.nodes.len()).rev() {
            // Take the op out to satisfy the borrow checker; values/grads are
            // addressed by index below.
            let go = self.nodes[i].grad.clone();
            if go.data().iter().all(|&g| g == 0.0) {
                continue;
            }
            match &self.nodes[i].op {
                Op::Leaf => {}
                &Op::MatMul(a, b) => {
                    let bt = self.nodes[b].value.transpose();
                    let da = go.matmul(&bt);
                    let at = self.nodes[a].value.transpose();
                    let db = at.matmul(&go);
                    self.nodes[a].grad.add_assign(&da);
                    self.nodes[b].grad.add_assign(&db);
                }
                &Op::Add(a, b) => {
                    self.nodes[a].grad.add_assign(&go);
                    self.nodes[b].grad.add_assign(&go);
                }
                &Op::Sub(a, b) => {
                    self.nodes[a].grad.add_assign(&go);
                    let neg = go.map(|g| -g);
                    self.nodes[b].grad.add_assign(&neg);
                }
                &Op::Mul(a, b) => {
                    let da = go.zip_map(&self.nodes[b].value, |g, y| g * y);
                    let db = go.zip_map(&self.nodes[a].value, |g, x| g * x);
                    self.nodes[a].grad.add_assign(&da);
                    self.nodes[b].grad.add_assign(&db);
                }
                &Op::BroadcastRow(a) => {
                    let mut da = Tensor2::zeros(1, go.cols());
                    for r in 0..go.rows() {
                        for j in 0..go.cols() {
                            da.set(0, j, da.get(0, j) + go.get(r, j));
                        }
                    }
                    self.nodes[a].grad.add_assign(&da);
                }
                &Op::BroadcastCol(a) => {
                    let mut da = Tensor2::zeros(go.rows(), 1);
                    for r in 0..go.rows() {
                        da.set(r, 0, go.row(r).iter().sum());
                    }
                    self.nodes[a].grad.add_assign(&da);
                }
                &Op::Transpose(a) => {
                    let da = go.transpose();
                    self.nodes[a].grad.add_assign(&da);
                }
                &Op::Activation(a, act) => {
                    let x = &self.nodes[a].value;
                    let y = &self.nodes[i].value;
                    let mut da = Tensor2::zeros(x.rows(), x.cols());
                    for k in 0..x.len() {
                        da.data_mut()[k] =
                            go.data()[k] * act.derivative(x.data()[k], y.data()[k]);
                    }
                    self.nodes[a].grad.add_assign(&da);
                }
                &Op::SoftmaxRows(a) | &Op::MaskedSoftmaxRows(a) => {
                    let y = self.nodes[i].value.clone();
                    let mut da = Tensor2::zeros(y.rows(), y.cols());
                    for r in 0..y.rows() {
                        let dot: f64 = go
                            .row(r)
                            .iter()
                            .zip(y.row(r))
                            .map(|(g, p)| g * p)
                            .sum();
                        for j in 0..y.cols() {
                            da.set(r, j, y.get(r, j) * (go.get(r, j) - dot));
                        }
                    }
                    self.nodes[a].grad.add_assign(&da);
                }
                Op::RowMax(a, arg) => {
                    let (a, arg) = (*a, arg.clone());
                    let mut da =
                        Tensor2::zeros(self.nodes[a].value.rows(), self.nodes[a].value.cols());
                    for (r, &j) in arg.iter().enumerate() {
                        da.set(r, j, go.get(r, 0));
                    }
                    self.nodes[a].grad.add_assign(&da);
                }
                &Op::LayerNorm { x, gain, bias } => {
                    let xs = self.nodes[x].value.clone();
                    let g = self.nodes[gain].value.clone();
                    let cols = xs.cols();
                    let mut dx = Tensor2::zeros(xs.rows(), cols);
                    let mut dgain = Tensor2::zeros(1, cols);
                    let mut dbias = Tensor2::zeros(1, cols);
                    for r in 0..xs.rows() {
                        let row = xs.row(r);
                        let (mu, var) = row_mean_var(row);
                        let inv = 1.0 / (var + LN_EPS).sqrt();
                        let xh: Vec<f64> = row.iter().map(|&v| (v - mu) * inv).collect();
                        let gor = go.row(r);
                        let dxh: Vec<f64> = gor
                            .iter()
                            .enumerate()
                            .map(|(j, &gv)| gv * g.get(0, j))
                            .collect();
                        let mean_dxh = dxh.iter().sum::<f64>() / cols as f64;
                        let mean_dxh_xh =
                            dxh.iter().zip(&xh).map(|(d, h)| d * h).sum::<f64>() / cols as f64;
                        for j in 0..cols {
                            dx.set(r, j, inv * (dxh[j] - mean_dxh - xh[j] * mean_dxh_xh));
                            dgain.set(0, j, dgain.get(0, j) + gor[j] * xh[j]);
                            dbias.set(0, j, dbias.get(0, j) + gor[j]);
                        }
                    }
                    self.nodes[x].grad.add_assign(&dx);
                    self.nodes[gain].grad.add_assign(&dgain);
                    self.nodes[bias].grad.add_assign(&dbias);
                }
                &Op::ConcatCols(a, b) => {
                    let ca = self.nodes[a].value.cols();
                    let mut da = Tensor2::zeros(go.rows(), ca);
                    let mut db = Tensor2::zeros(go.rows(), go.cols() - ca);
                    for r in 0..go.rows() {
                        da.row_mut(r).copy_from_slice(&go.row(r)[..ca]);
                        db.row_mut(r).copy_from_slice(&go.row(r)[ca..]);
                    }
                    self.nodes[a].grad.add_assign(&da);
                    self.nodes[b].grad.add_assign(&db);
                }
                Op::ConcatRows(parts) => {
                    let parts = parts.clone();
                    let mut at = 0;
                    for p in parts {
                        let rows = self.nodes[p].value.rows();
                        let cols = self.nodes[p].value.cols();
                        let mut dp = Tensor2::zeros(rows, cols);
                        for r in 0..rows {
                            dp.row_mut(r).copy_from_slice(go.row(at + r));
                        }
                        at += rows;
                        self.nodes[p].grad.add_assign(&dp);
                    }
                }
                Op::Dropout(a, mask) => {
                    let a = *a;
                    let da = go.zip_map(mask, |g, m| g * m);
                    self.nodes[a].grad.add_assign(&da);
                }
                &Op::MulScalar(a, s) => {
                    let da = go.map(|g| g * s);
                    self.nodes[a].grad.add_assign(&da);
                }
                &Op::Mean(a) => {
                    let n = self.nodes[a].value.len() as f64;
                    let g = go.item() / n;
                    let da = Tensor2::filled(
                        self.nodes[a].value.rows(),
                        self.nodes[a].value.cols(),
                        g,
                    );
                    self.nodes[a].grad.add_assign(&da);
                }
                Op::CrossEntropy(a, targets) => {
                    let (a, targets) = (*a, targets.clone());
                    let z = &self.nodes[a].value;
                    let scale = go.item() / targets.len() as f64;
                    let mut da = Tensor2::zeros(z.rows(), z.cols());
                    for (r, &y) in targets.iter().enumerate() {
                        let mut p = vec![0.0; z.cols()];
                        softmax_into(z.row(r), &mut p);
                        for j in 0..z.cols() {
                            let ind = if j == y { 1.0 } else { 0.0 };
                            da.set(r, j, scale * (p[j] - ind));
                        }
                    }
                    self.nodes[a].grad.add_assign(&da);
                }
            }
        }
        Ok(())
    }

    /// Adds each bound parameter's tape gradient into the store.
    pub fn accumulate_grads(&self, store: &mut ParamStore) {
        for (name, id) in &self.bindings {
            store.grad_mut(name).add_assign(&self.nodes[id.0].grad);
        }
    }
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

/// Numerically stable softmax of a slice.
pub fn softmax_slice(z: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; z.len()];
    softmax_into(z, &mut out);
    out
}

fn softmax_into(z: &[f64], out: &mut [f64]) {
    let mx = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut denom = 0.0;
    for (o, &x) in out.iter_mut().zip(z) {
        *o = (x - mx).exp();
        denom += *o;
    }
    for o in out.iter_mut() {
        *o /= denom;
    }
}

fn row_mean_var(row: &[f64]) -> (f64, f64) {
    let n = row.len() as f64;
    let mu = row.iter().sum::<f64>() / n;
    let var = row.iter().map(|&v| (v - mu) * (v - mu)).sum::<f64>() / n;
    (mu, var)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softmax_uniform_logits() {
        let p = softmax_slice(&[0.0; 6]);
        for v in &p {
            assert!((v - 1.0 / 6.0).abs() < 1e-15);
        }
    }

    #[test]
    fn softmax_closed_form() {
        // [ln 2, 0] -> [2/3, 1/3]
        let p = softmax_slice(&[2.0_f64.ln(), 0.0]);
        assert!((p[0] - 2.0 / 3.0).abs() < 1e-12);
        assert!((p[1] - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn softmax_normalizes() {
        let p = softmax_slice(&[3.1, -2.0, 0.7, 11.0, -4.4, 0.0]);
        let s: f64 = p.iter().sum();
        assert!((s - 1.0).abs() < 1e-12);
        assert!(p.iter().all(|&v| v > 0.0));
    }

    #[test]
    fn cross_entropy_uniform_is_ln6() {
        let mut tape = Tape::new();
        let z = tape.leaf(Tensor2::zeros(1, 6));
        let loss = tape.cross_entropy(z, &[2]);
        assert!((tape.value(loss).item() - 6.0_f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn cross_entropy_drops_with_margin() {
        // Larger correct-class logit -> strictly smaller loss.
        let mut prev = f64::INFINITY;
        for margin in [0.0, 1.0, 3.0, 10.0, 30.0] {
            let mut tape = Tape::new();
            let mut row = vec![0.0; 6];
            row[0] = margin;
            let z = tape.leaf(Tensor2::from_vec(1, 6, row));
            let loss = tape.cross_entropy(z, &[0]);
            let v = tape.value(loss).item();
            assert!(v < prev);
            prev = v;
        }
        assert!(prev < 1e-10);
    }

    #[test]
    fn mse_definition() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor2::from_vec(1, 2, vec![0.0, 0.0]));
        let loss = tape.mse(x, &Tensor2::from_vec(1, 2, vec![1.0, 1.0]));
        assert_eq!(tape.value(loss).item(), 1.0);

        let mut tape = Tape::new();
        let same = Tensor2::from_vec(1, 3, vec![0.5, -1.0, 2.0]);
        let x = tape.leaf(same.clone());
        let loss = tape.mse(x, &same);
        assert_eq!(tape.value(loss).item(), 0.0);
    }

    #[test]
    fn backward_requires_scalar() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor2::zeros(2, 2));
        assert!(tape.backward(x).is_err());
    }

    #[test]
    fn masked_softmax_empty_row_errors() {
        let mut tape = Tape::new();
        let s = tape.leaf(Tensor2::zeros(2, 2));
        let mask = Tensor2::from_vec(2, 2, vec![1.0, 1.0, 0.0, 0.0]);
        assert!(tape.masked_softmax_rows(s, &mask).is_err());
    }

    #[test]
    fn row_max_gradient_hits_argmax_only() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor2::from_vec(2, 3, vec![1.0, 5.0, 2.0, 7.0, 0.0, 3.0]));
        let m = tape.row_max(x);
        let loss = tape.mean(m);
        tape.backward(loss).unwrap();
        let g = tape.grad(x);
        assert_eq!(g.data(), &[0.0, 0.5, 0.0, 0.5, 0.0, 0.0]);
    }
}

//! Stage 2: the iterative graph network.
//!
//! Each iteration modulates the original node states with the previous
//! iteration's confidence (feature-wise linear modulation), runs them
//! through a graph-attention block over the cluster adjacency, and reads a
//! fresh confidence as the maximum class probability of a temporary
//! classifier. Iteration 0 skips modulation. After the final iteration the
//! head classifies the concatenation of the last attention output with the
//! original states, so at initialization the network reproduces the edge
//! classifier's verdicts exactly and training can only refine them.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::edge::{argmax_class, LogRecord};
use crate::error::{Error, Result};
use crate::inject::FaultClass;
use crate::nn::{Act, AdamConfig, Dense, NodeId, ParamStore, Tape, Tensor2};
use crate::topology::Topology;

/// Architecture and training knobs for the graph stage.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct IgnConfig {
    /// Number of graph-attention passes (iterations 0..k-1).
    pub k_iterations: usize,
    pub gat_layers: usize,
    /// Width of every attention layer; also the final block output dim.
    pub gat_hidden: usize,
    /// Dropout rate on attention weights during training.
    pub dropout: f64,
    pub self_loops: bool,
    pub epochs: usize,
    pub lr: f64,
    pub val_fraction: f64,
    pub patience: usize,
    pub seed: u64,
}

impl Default for IgnConfig {
    fn default() -> Self {
        IgnConfig {
            k_iterations: 3,
            gat_layers: 2,
            gat_hidden: 16,
            dropout: 0.1,
            self_loops: true,
            epochs: 40,
            lr: 1e-3,
            val_fraction: 0.15,
            patience: 10,
            seed: 1,
        }
    }
}

/// One attention layer's parameter bundle.
#[derive(Debug, Clone)]
struct GatLayer {
    name: String,
    d_in: usize,
    d_out: usize,
    /// Layer norm + activation apply after every layer except the last of
    /// the block.
    normalized: bool,
}

impl GatLayer {
    fn w(&self) -> String {
        format!("{}.w", self.name)
    }
    fn a_src(&self) -> String {
        format!("{}.a_src", self.name)
    }
    fn a_dst(&self) -> String {
        format!("{}.a_dst", self.name)
    }
    fn ln_gain(&self) -> String {
        format!("{}.ln_g", self.name)
    }
    fn ln_bias(&self) -> String {
        format!("{}.ln_b", self.name)
    }

    fn init(&self, store: &mut ParamStore, rng: &mut impl Rng) {
        store.insert_uniform(&self.w(), self.d_in, self.d_out, self.d_in, rng);
        store.insert_uniform(&self.a_src(), self.d_out, 1, self.d_out, rng);
        store.insert_uniform(&self.a_dst(), self.d_out, 1, self.d_out, rng);
        if self.normalized {
            store.insert(&self.ln_gain(), Tensor2::filled(1, self.d_out, 1.0));
            store.insert(&self.ln_bias(), Tensor2::zeros(1, self.d_out));
        }
    }

    /// Standard graph attention: scores leaky_relu(a_src . Wh_i +
    /// a_dst . Wh_j) softmaxed over each closed neighborhood, then the
    /// attention-weighted sum of transformed neighbor features.
    fn forward(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        h: NodeId,
        mask: &Tensor2,
        dropout: f64,
        rng: &mut Option<&mut ChaCha8Rng>,
    ) -> Result<NodeId> {
        let n = tape.value(h).rows();
        if tape.value(h).cols() != self.d_in {
            return Err(Error::Shape(format!(
                "gat {}: input has {} columns, expected {}",
                self.name,
                tape.value(h).cols(),
                self.d_in
            )));
        }
        let w = tape.param(store, &self.w());
        let a_src = tape.param(store, &self.a_src());
        let a_dst = tape.param(store, &self.a_dst());
        let wh = tape.matmul(h, w);
        let f = tape.matmul(wh, a_src);
        let g = tape.matmul(wh, a_dst);
        let gt = tape.transpose(g);
        let fcol = tape.broadcast_col(f, n);
        let grow = tape.broadcast_row(gt, n);
        let raw = tape.add(fcol, grow);
        let scores = tape.activation(raw, Act::LeakyRelu);
        let mut alpha = tape.masked_softmax_rows(scores, mask)?;
        if let Some(rng) = rng {
            if dropout > 0.0 {
                alpha = tape.dropout(alpha, dropout, rng);
            }
        }
        let mut out = tape.matmul(alpha, wh);
        if self.normalized {
            let gain = tape.param(store, &self.ln_gain());
            let bias = tape.param(store, &self.ln_bias());
            out = tape.layer_norm(out, gain, bias);
            out = tape.activation(out, Act::Relu);
        }
        Ok(out)
    }
}

/// The trained graph model.
#[derive(Debug)]
pub struct IgnModel {
    pub store: ParamStore,
    pub d0: usize,
    pub d_g: usize,
    pub k_iterations: usize,
    pub dropout: f64,
    pub self_loops: bool,
    film_gamma: Dense,
    film_beta: Dense,
    gat: Vec<GatLayer>,
    f_temp: Dense,
    head: Dense,
}

impl IgnModel {
    /// Builds the model with the documented initialization: FiLM generators
    /// start as the identity (scale 1, shift 0) and the head starts as a
    /// selector of the edge logits inside the original node states.
    pub fn init(d0: usize, config: &IgnConfig) -> Result<Self> {
        if config.k_iterations == 0 {
            return Err(Error::Config("k_iterations must be at least 1".into()));
        }
        if config.gat_layers == 0 {
            return Err(Error::Config("gat_layers must be at least 1".into()));
        }
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(0x51f7));

        let film_gamma = Dense::new("ign.film.gamma", 1, d0, Act::Identity);
        let film_beta = Dense::new("ign.film.beta", 1, d0, Act::Identity);
        film_gamma.init_with(&mut store, Tensor2::zeros(1, d0), Tensor2::filled(1, d0, 1.0));
        film_beta.init_with(&mut store, Tensor2::zeros(1, d0), Tensor2::zeros(1, d0));

        let mut gat = Vec::new();
        let mut d_in = d0;
        for l in 0..config.gat_layers {
            let layer = GatLayer {
                name: format!("ign.gat{}", l + 1),
                d_in,
                d_out: config.gat_hidden,
                normalized: l + 1 < config.gat_layers,
            };
            layer.init(&mut store, &mut rng);
            d_in = config.gat_hidden;
            gat.push(layer);
        }

        let f_temp = Dense::new("ign.f_temp", config.gat_hidden, 6, Act::Identity);
        f_temp.init(&mut store, &mut rng);

        let head = Dense::new("ign.head", config.gat_hidden + d0, 6, Act::Identity);
        if d0 >= 6 {
            // Selector initialization: pass the edge logits (the first six
            // node-state columns) straight through, so the untrained network
            // starts from the edge classifier's verdicts.
            let mut head_w = Tensor2::zeros(config.gat_hidden + d0, 6);
            for j in 0..6 {
                head_w.set(config.gat_hidden + j, j, 1.0);
            }
            head.init_with(&mut store, head_w, Tensor2::zeros(1, 6));
        } else {
            head.init(&mut store, &mut rng);
        }

        Ok(IgnModel {
            store,
            d0,
            d_g: config.gat_hidden,
            k_iterations: config.k_iterations,
            dropout: config.dropout,
            self_loops: config.self_loops,
            film_gamma,
            film_beta,
            gat,
            f_temp,
            head,
        })
    }

    /// Rebuilds a model around a loaded store.
    pub fn from_store(store: ParamStore, d0: usize, config: &IgnConfig) -> Result<Self> {
        let mut model = Self::init(d0, config)?;
        for name in model.store.names() {
            if !store.contains(&name) {
                return Err(Error::Checkpoint(format!("missing parameter {name}")));
            }
        }
        model.store = store;
        Ok(model)
    }

    fn gat_block(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        h: NodeId,
        mask: &Tensor2,
        rng: &mut Option<&mut ChaCha8Rng>,
    ) -> Result<NodeId> {
        let mut out = h;
        for layer in &self.gat {
            out = layer.forward(tape, store, out, mask, self.dropout, rng)?;
        }
        Ok(out)
    }

    /// Feature-wise linear modulation of the original states by a
    /// confidence column: `g_gamma(c) * H0 + g_beta(c)` row-wise.
    pub fn film_modulate(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        h0: NodeId,
        confidence: NodeId,
    ) -> Result<NodeId> {
        let gamma = self.film_gamma.forward(tape, store, confidence)?;
        let beta = self.film_beta.forward(tape, store, confidence)?;
        let scaled = tape.mul(gamma, h0);
        Ok(tape.add(scaled, beta))
    }

    /// Temporary classification: logits, probabilities, and per-node
    /// confidence (the max probability).
    pub fn temp_classify(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        h_g: NodeId,
    ) -> Result<(NodeId, NodeId, NodeId)> {
        let z = self.f_temp.forward(tape, store, h_g)?;
        let p = tape.softmax_rows(z);
        let c = tape.row_max(p);
        Ok((z, p, c))
    }

    /// Full iterative forward pass on the tape; returns the final logits
    /// node (N x 6). `rng` enables attention dropout (training only).
    pub fn forward_on_tape(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        h0: NodeId,
        mask: &Tensor2,
        mut rng: Option<&mut ChaCha8Rng>,
    ) -> Result<NodeId> {
        let n = tape.value(h0).rows();
        if mask.shape() != (n, n) {
            return Err(Error::Shape(format!(
                "adjacency mask is {}x{}, expected {n}x{n}",
                mask.rows(),
                mask.cols()
            )));
        }
        // Iteration 0: unmodulated.
        let mut h_g = self.gat_block(tape, store, h0, mask, &mut rng)?;
        for _k in 1..self.k_iterations {
            let (_, _, confidence) = self.temp_classify(tape, store, h_g)?;
            let modulated = self.film_modulate(tape, store, h0, confidence)?;
            h_g = self.gat_block(tape, store, modulated, mask, &mut rng)?;
        }
        let joint = tape.concat_cols(h_g, h0);
        self.head.forward(tape, store, joint)
    }

    /// Inference: final logits for one graph sample.
    pub fn forward(&self, h0: &Tensor2, topology: &Topology) -> Result<Tensor2> {
        let mask = topology.adjacency_matrix(self.self_loops);
        let mut tape = Tape::new();
        let h0_node = tape.leaf(h0.clone());
        let logits = self.forward_on_tape(&mut tape, &self.store, h0_node, &mask, None)?;
        Ok(tape.value(logits).clone())
    }

    /// Argmax class per node.
    pub fn predict(&self, h0: &Tensor2, topology: &Topology) -> Result<Vec<FaultClass>> {
        let logits = self.forward(h0, topology)?;
        Ok((0..logits.rows()).map(|r| argmax_class(logits.row(r))).collect())
    }
}

/// One training sample: the node-state matrix of a window across the whole
/// cluster, with per-node labels.
#[derive(Debug, Clone)]
pub struct GraphSample {
    pub h0: Tensor2,
    pub labels: Vec<FaultClass>,
}

/// Trains the graph stage on per-window samples with cross-entropy over all
/// nodes, keeping the best-validation snapshot. The edge model is not
/// involved: its outputs are already frozen inside the samples.
pub fn train_ign(
    config: &IgnConfig,
    d0: usize,
    samples: &[GraphSample],
    topology: &Topology,
) -> Result<(IgnModel, Vec<LogRecord>)> {
    if samples.is_empty() {
        return Err(Error::Config("no graph samples to train on".into()));
    }
    let n = topology.len();
    for s in samples {
        if s.h0.shape() != (n, d0) || s.labels.len() != n {
            return Err(Error::Shape(format!(
                "graph sample is {}x{} with {} labels, expected {n}x{d0}",
                s.h0.rows(),
                s.h0.cols(),
                s.labels.len()
            )));
        }
    }
    let mut model = IgnModel::init(d0, config)?;
    let mask = topology.adjacency_matrix(config.self_loops);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(0xa11ce));

    let mut order: Vec<usize> = (0..samples.len()).collect();
    order.shuffle(&mut rng);
    let n_val = ((samples.len() as f64 * config.val_fraction).round() as usize)
        .min(samples.len().saturating_sub(1));
    let val_idx: Vec<usize> = order[..n_val].to_vec();
    let mut train_idx: Vec<usize> = order[n_val..].to_vec();

    let adam = AdamConfig::with_lr(config.lr);
    let mut log = Vec::new();
    let mut best_val_acc = -1.0f64;
    let mut best_snapshot = model.store.snapshot_values();
    let mut since_best = 0usize;

    for epoch in 0..config.epochs {
        train_idx.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut correct = 0usize;
        let mut seen = 0usize;
        for &i in &train_idx {
            let sample = &samples[i];
            let targets: Vec<usize> = sample.labels.iter().map(|l| l.index()).collect();
            let mut tape = Tape::new();
            let h0 = tape.leaf(sample.h0.clone());
            let logits =
                model.forward_on_tape(&mut tape, &model.store, h0, &mask, Some(&mut rng))?;
            let loss = tape.cross_entropy(logits, &targets);
            epoch_loss += tape.value(loss).item();
            let lv = tape.value(logits).clone();
            model.store.zero_grads();
            tape.backward(loss)?;
            tape.accumulate_grads(&mut model.store);
            model.store.adam_step(&adam);
            for (r, &y) in targets.iter().enumerate() {
                if argmax_class(lv.row(r)).index() == y {
                    correct += 1;
                }
            }
            seen += targets.len();
        }
        log.push(LogRecord {
            phase: "ign".into(),
            epoch,
            split: "train".into(),
            loss: epoch_loss / train_idx.len().max(1) as f64,
            accuracy: Some(correct as f64 / seen.max(1) as f64),
        });

        // Validation without dropout.
        let (val_loss, val_acc) = evaluate_ign(&model, samples, &val_idx, &mask)?;
        log.push(LogRecord {
            phase: "ign".into(),
            epoch,
            split: "val".into(),
            loss: val_loss,
            accuracy: Some(val_acc),
        });
        if val_acc > best_val_acc {
            best_val_acc = val_acc;
            best_snapshot = model.store.snapshot_values();
            since_best = 0;
        } else {
            since_best += 1;
            if since_best > config.patience {
                break;
            }
        }
    }
    model.store.restore_values(&best_snapshot);
    Ok((model, log))
}

fn evaluate_ign(
    model: &IgnModel,
    samples: &[GraphSample],
    idx: &[usize],
    mask: &Tensor2,
) -> Result<(f64, f64)> {
    if idx.is_empty() {
        return Ok((f64::NAN, 0.0));
    }
    let mut total_loss = 0.0;
    let mut correct = 0usize;
    let mut seen = 0usize;
    for &i in idx {
        let sample = &samples[i];
        let targets: Vec<usize> = sample.labels.iter().map(|l| l.index()).collect();
        let mut tape = Tape::new();
        let h0 = tape.leaf(sample.h0.clone());
        let logits = model.forward_on_tape(&mut tape, &model.store, h0, mask, None)?;
        let loss = tape.cross_entropy(logits, &targets);
        total_loss += tape.value(loss).item();
        let lv = tape.value(logits);
        for (r, &y) in targets.iter().enumerate() {
            if argmax_class(lv.row(r)).index() == y {
                correct += 1;
            }
        }
        seen += targets.len();
    }
    Ok((total_loss / idx.len() as f64, correct as f64 / seen as f64))
}

/// Assembles a node-state matrix from per-node edge outputs: logits (6)
/// concatenated with the embedding.
pub fn node_states_from_edge(logits: &Tensor2, embeddings: &Tensor2) -> Result<Tensor2> {
    if logits.rows() != embeddings.rows() {
        return Err(Error::Shape(format!(
            "{} logit rows vs {} embedding rows",
            logits.rows(),
            embeddings.rows()
        )));
    }
    if logits.cols() != 6 {
        return Err(Error::Shape(format!("expected 6 logits, got {}", logits.cols())));
    }
    let d0 = 6 + embeddings.cols();
    let mut h0 = Tensor2::zeros(logits.rows(), d0);
    for r in 0..logits.rows() {
        h0.row_mut(r)[..6].copy_from_slice(logits.row(r));
        h0.row_mut(r)[6..].copy_from_slice(embeddings.row(r));
    }
    Ok(h0)
}

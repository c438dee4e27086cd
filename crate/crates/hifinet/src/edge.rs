//! Stage 1: the per-node edge classifier.
//!
//! An LSTM stacked autoencoder is pretrained one layer at a time on
//! unlabeled windows: layer l trains an (encoder, decoder) pair to
//! reconstruct its own input, which for l > 1 is the frozen output of the
//! already-trained stack below. Freezing falls out of the structure: each
//! phase owns a store holding only that layer's parameters and consumes
//! precomputed inputs. After pretraining, the decoders are dropped, a dense
//! head is attached to the last hidden state, and the whole network is
//! fine-tuned with cross-entropy on labeled windows, keeping the
//! best-validation checkpoint.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{LabeledWindow, NormStats};
use crate::inject::FaultClass;
use crate::nn::{Act, AdamConfig, Dense, Lstm, NodeId, ParamStore, Tape, Tensor2};

/// Architecture and training knobs for the edge classifier.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct EdgeConfig {
    pub window: usize,
    /// Hidden size per encoder layer, bottom up; the last is the embedding
    /// dimension forwarded to the graph stage.
    pub hidden_dims: Vec<usize>,
    pub pretrain_epochs: usize,
    pub pretrain_lr: f64,
    pub finetune_epochs: usize,
    pub finetune_lr: f64,
    pub batch_size: usize,
    pub val_fraction: f64,
    pub patience: usize,
    pub seed: u64,
}

impl Default for EdgeConfig {
    fn default() -> Self {
        EdgeConfig {
            window: 24,
            hidden_dims: vec![32, 16],
            pretrain_epochs: 8,
            pretrain_lr: 1e-3,
            finetune_epochs: 30,
            finetune_lr: 1e-3,
            batch_size: 64,
            val_fraction: 0.15,
            patience: 10,
            seed: 1,
        }
    }
}

/// Logits plus the final-encoder-state embedding for one window.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeOutput {
    pub logits: Vec<f64>,
    pub embedding: Vec<f64>,
}

/// One line of a training log.
#[derive(Debug, Clone, Serialize)]
pub struct LogRecord {
    pub phase: String,
    pub epoch: usize,
    pub split: String,
    pub loss: f64,
    pub accuracy: Option<f64>,
}

/// The trained edge classifier: encoder stack, head, and the normalization
/// statistics its inputs were trained under.
#[derive(Debug)]
pub struct EdgeModel {
    pub store: ParamStore,
    pub norm: NormStats,
    pub window: usize,
    pub hidden_dims: Vec<usize>,
    encoders: Vec<Lstm>,
    head: Dense,
}

impl EdgeModel {
    pub fn embedding_dim(&self) -> usize {
        *self.hidden_dims.last().expect("at least one layer")
    }

    /// Layer specs for a given architecture; shared by training and loading.
    fn build_layers(hidden_dims: &[usize]) -> (Vec<Lstm>, Dense) {
        let mut encoders = Vec::new();
        let mut d_in = 1usize;
        for (l, &d_h) in hidden_dims.iter().enumerate() {
            encoders.push(Lstm::new(format!("edge.enc{}", l + 1), d_in, d_h));
            d_in = d_h;
        }
        let head = Dense::new("edge.head", d_in, 6, Act::Identity);
        (encoders, head)
    }

    /// Rebuilds a model around a loaded store.
    pub fn from_parts(
        store: ParamStore,
        norm: NormStats,
        window: usize,
        hidden_dims: Vec<usize>,
    ) -> Result<Self> {
        let (encoders, head) = Self::build_layers(&hidden_dims);
        for enc in &encoders {
            for name in enc.param_names() {
                if !store.contains(&name) {
                    return Err(Error::Checkpoint(format!("missing parameter {name}")));
                }
            }
        }
        Ok(EdgeModel {
            store,
            norm,
            window,
            hidden_dims,
            encoders,
            head,
        })
    }

    /// Runs the stacked encoder on a batch of normalized windows (rows of
    /// `batch_steps[t]` hold sample t of each window) and returns the last
    /// hidden node.
    fn encode_batch(&self, tape: &mut Tape, steps: &[NodeId]) -> Result<NodeId> {
        let mut current: Vec<NodeId> = steps.to_vec();
        for enc in &self.encoders {
            current = enc.forward_steps(tape, &self.store, &current)?;
        }
        Ok(*current.last().expect("non-empty sequence"))
    }

    /// Deterministic forward pass for one raw (unnormalized) window.
    pub fn forward(&self, window: &LabeledWindow) -> Result<EdgeOutput> {
        let (logits, embeddings) = self.forward_batch(std::slice::from_ref(window))?;
        Ok(EdgeOutput {
            logits: logits.row(0).to_vec(),
            embedding: embeddings.row(0).to_vec(),
        })
    }

    /// Batched forward pass: returns (logits B x 6, embeddings B x d_emb).
    pub fn forward_batch(&self, windows: &[LabeledWindow]) -> Result<(Tensor2, Tensor2)> {
        if windows.is_empty() {
            return Err(Error::Shape("edge forward on an empty batch".into()));
        }
        for w in windows {
            if w.values.len() != self.window {
                return Err(Error::Shape(format!(
                    "window has {} samples, model expects {}",
                    w.values.len(),
                    self.window
                )));
            }
        }
        let normalized: Vec<Vec<f64>> = windows.iter().map(|w| self.norm.normalize(w)).collect();
        let mut tape = Tape::new();
        let steps = leaf_steps(&mut tape, &normalized, self.window);
        let last = self.encode_batch(&mut tape, &steps)?;
        let logits = self.head.forward(&mut tape, &self.store, last)?;
        Ok((tape.value(logits).clone(), tape.value(last).clone()))
    }

    /// Argmax class per window.
    pub fn predict(&self, windows: &[LabeledWindow]) -> Result<Vec<FaultClass>> {
        let (logits, _) = self.forward_batch(windows)?;
        Ok((0..logits.rows()).map(|r| argmax_class(logits.row(r))).collect())
    }
}

pub fn argmax_class(logits: &[f64]) -> FaultClass {
    let mut best = 0usize;
    for (j, &v) in logits.iter().enumerate() {
        if v > logits[best] {
            best = j;
        }
    }
    FaultClass::from_index(best).expect("six logits")
}

/// Column-of-steps leaves for a batch of equal-length sequences with scalar
/// samples: step t is a B x 1 tensor.
fn leaf_steps(tape: &mut Tape, sequences: &[Vec<f64>], len: usize) -> Vec<NodeId> {
    (0..len)
        .map(|t| {
            let col: Vec<f64> = sequences.iter().map(|s| s[t]).collect();
            tape.leaf(Tensor2::from_vec(col.len(), 1, col))
        })
        .collect()
}

/// Step leaves for a batch of equal-length sequences of row vectors.
fn leaf_steps_wide(tape: &mut Tape, sequences: &[Tensor2], len: usize) -> Vec<NodeId> {
    let cols = sequences[0].cols();
    (0..len)
        .map(|t| {
            let mut m = Tensor2::zeros(sequences.len(), cols);
            for (b, s) in sequences.iter().enumerate() {
                m.row_mut(b).copy_from_slice(s.row(t));
            }
            tape.leaf(m)
        })
        .collect()
}

/// A trained (encoder, decoder) pair from one pretraining phase.
pub struct PretrainedLayer {
    pub encoder: Lstm,
    pub store: ParamStore,
    /// Mean reconstruction loss per epoch.
    pub loss_curve: Vec<f64>,
}

/// Trains one autoencoder layer on its inputs (sequences of shape T x d_in).
/// The decoder is an LSTM over the encoder's hidden sequence plus a per-step
/// linear projection back to d_in; reconstruction loss is MSE over all
/// steps.
pub fn pretrain_layer(
    layer_index: usize,
    inputs: &[Tensor2],
    d_in: usize,
    d_h: usize,
    epochs: usize,
    lr: f64,
    batch_size: usize,
    seed: u64,
) -> Result<PretrainedLayer> {
    if inputs.is_empty() {
        return Err(Error::Shape("pretraining needs at least one window".into()));
    }
    let t_len = inputs[0].rows();
    for inp in inputs {
        if inp.cols() != d_in || inp.rows() != t_len {
            return Err(Error::Shape(format!(
                "pretrain layer {layer_index}: input is {}x{}, expected {}x{}",
                inp.rows(),
                inp.cols(),
                t_len,
                d_in
            )));
        }
    }
    let encoder = Lstm::new(format!("edge.enc{layer_index}"), d_in, d_h);
    let decoder = Lstm::new(format!("edge.dec{layer_index}"), d_h, d_h);
    let proj = Dense::new(format!("edge.dec{layer_index}.proj"), d_h, d_in, Act::Identity);
    let mut store = ParamStore::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    encoder.init(&mut store, &mut rng);
    decoder.init(&mut store, &mut rng);
    proj.init(&mut store, &mut rng);

    let adam = AdamConfig::with_lr(lr);
    let mut order: Vec<usize> = (0..inputs.len()).collect();
    let mut loss_curve = Vec::with_capacity(epochs);
    for _epoch in 0..epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(batch_size) {
            let batch: Vec<Tensor2> = chunk.iter().map(|&i| inputs[i].clone()).collect();
            let mut tape = Tape::new();
            let steps = leaf_steps_wide(&mut tape, &batch, t_len);
            let hidden = encoder.forward_steps(&mut tape, &store, &steps)?;
            let decoded = decoder.forward_steps(&mut tape, &store, &hidden)?;
            let recon_steps: Result<Vec<NodeId>> = decoded
                .iter()
                .map(|&h| proj.forward(&mut tape, &store, h))
                .collect();
            let recon = tape.concat_rows(&recon_steps?);
            let target = {
                let mut m = Tensor2::zeros(t_len * batch.len(), d_in);
                let mut at = 0;
                for t in 0..t_len {
                    for s in &batch {
                        m.row_mut(at).copy_from_slice(s.row(t));
                        at += 1;
                    }
                }
                m
            };
            let loss = tape.mse(recon, &target);
            let loss_value = tape.value(loss).item();
            store.zero_grads();
            tape.backward(loss)?;
            tape.accumulate_grads(&mut store);
            store.adam_step(&adam);
            epoch_loss += loss_value;
            batches += 1;
        }
        loss_curve.push(epoch_loss / batches.max(1) as f64);
    }
    Ok(PretrainedLayer {
        encoder,
        store,
        loss_curve,
    })
}

/// Runs a trained encoder layer over inputs, producing each window's hidden
/// sequence for the next pretraining phase.
pub fn encode_sequences(
    encoder: &Lstm,
    store: &ParamStore,
    inputs: &[Tensor2],
    batch_size: usize,
) -> Result<Vec<Tensor2>> {
    let t_len = inputs[0].rows();
    let mut out = Vec::with_capacity(inputs.len());
    for chunk in inputs.chunks(batch_size) {
        let mut tape = Tape::new();
        let steps = leaf_steps_wide(&mut tape, chunk, t_len);
        let hidden = encoder.forward_steps(&mut tape, store, &steps)?;
        let values: Vec<Tensor2> = hidden.iter().map(|&h| tape.value(h).clone()).collect();
        for b in 0..chunk.len() {
            let mut seq = Tensor2::zeros(t_len, encoder.d_h);
            for (t, v) in values.iter().enumerate() {
                seq.row_mut(t).copy_from_slice(v.row(b));
            }
            out.push(seq);
        }
    }
    Ok(out)
}

/// Trains the complete edge classifier: normalization from the training
/// windows, greedy layer-wise pretraining, then supervised fine-tuning with
/// a best-validation checkpoint.
pub fn train_edge(
    config: &EdgeConfig,
    train_windows: &[LabeledWindow],
) -> Result<(EdgeModel, Vec<LogRecord>)> {
    if train_windows.is_empty() {
        return Err(Error::Config("no training windows".into()));
    }
    let mut classes: Vec<FaultClass> = train_windows.iter().map(|w| w.label).collect();
    classes.sort_unstable();
    classes.dedup();
    if classes.len() < 2 {
        return Err(Error::Config(
            "degenerate labels: training set contains a single class".into(),
        ));
    }

    let norm = NormStats::from_windows(train_windows);
    let mut log = Vec::new();

    // Layer-wise pretraining on unlabeled (normalized) windows.
    let mut inputs: Vec<Tensor2> = train_windows
        .iter()
        .map(|w| Tensor2::from_vec(config.window, 1, norm.normalize(w)))
        .collect();
    let mut store = ParamStore::new();
    let mut d_in = 1usize;
    for (l, &d_h) in config.hidden_dims.iter().enumerate() {
        let phase = pretrain_layer(
            l + 1,
            &inputs,
            d_in,
            d_h,
            config.pretrain_epochs,
            config.pretrain_lr,
            config.batch_size,
            config.seed.wrapping_add(l as u64),
        )?;
        for (epoch, loss) in phase.loss_curve.iter().enumerate() {
            log.push(LogRecord {
                phase: format!("pretrain{}", l + 1),
                epoch,
                split: "train".into(),
                loss: *loss,
                accuracy: None,
            });
        }
        // Frozen outputs feed the next layer.
        inputs = encode_sequences(&phase.encoder, &phase.store, &inputs, config.batch_size)?;
        for name in phase.encoder.param_names() {
            store.insert(&name, phase.store.value(&name).clone());
        }
        d_in = d_h;
    }

    // Attach the head and fine-tune end to end.
    let (_, head) = EdgeModel::build_layers(&config.hidden_dims);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(0x9e37));
    head.init(&mut store, &mut rng);
    let mut model = EdgeModel::from_parts(store, norm, config.window, config.hidden_dims.clone())?;

    let (train_idx, val_idx) = stratified_split(train_windows, config.val_fraction, &mut rng);
    let normalized: Vec<Vec<f64>> = train_windows.iter().map(|w| model.norm.normalize(w)).collect();
    let labels: Vec<usize> = train_windows.iter().map(|w| w.label.index()).collect();

    let adam = AdamConfig::with_lr(config.finetune_lr);
    let mut best_val_acc = -1.0f64;
    let mut best_snapshot = model.store.snapshot_values();
    let mut since_best = 0usize;
    let mut order = train_idx.clone();
    for epoch in 0..config.finetune_epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut batches = 0usize;
        let mut correct = 0usize;
        for chunk in order.chunks(config.batch_size) {
            let seqs: Vec<Vec<f64>> = chunk.iter().map(|&i| normalized[i].clone()).collect();
            let targets: Vec<usize> = chunk.iter().map(|&i| labels[i]).collect();
            let mut tape = Tape::new();
            let steps = leaf_steps(&mut tape, &seqs, config.window);
            let last = model.encode_batch(&mut tape, &steps)?;
            let logits = model.head.forward(&mut tape, &model.store, last)?;
            let loss = tape.cross_entropy(logits, &targets);
            let loss_value = tape.value(loss).item();
            let logit_values = tape.value(logits).clone();
            model.store.zero_grads();
            tape.backward(loss)?;
            tape.accumulate_grads(&mut model.store);
            model.store.adam_step(&adam);
            for (r, &y) in targets.iter().enumerate() {
                if argmax_class(logit_values.row(r)).index() == y {
                    correct += 1;
                }
            }
            epoch_loss += loss_value;
            batches += 1;
        }
        let train_acc = correct as f64 / order.len().max(1) as f64;
        log.push(LogRecord {
            phase: "finetune".into(),
            epoch,
            split: "train".into(),
            loss: epoch_loss / batches.max(1) as f64,
            accuracy: Some(train_acc),
        });

        let (val_loss, val_acc) =
            evaluate_split(&model, &normalized, &labels, &val_idx, config)?;
        log.push(LogRecord {
            phase: "finetune".into(),
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

fn evaluate_split(
    model: &EdgeModel,
    normalized: &[Vec<f64>],
    labels: &[usize],
    idx: &[usize],
    config: &EdgeConfig,
) -> Result<(f64, f64)> {
    if idx.is_empty() {
        return Ok((f64::NAN, 0.0));
    }
    let mut total_loss = 0.0;
    let mut batches = 0usize;
    let mut correct = 0usize;
    for chunk in idx.chunks(config.batch_size) {
        let seqs: Vec<Vec<f64>> = chunk.iter().map(|&i| normalized[i].clone()).collect();
        let targets: Vec<usize> = chunk.iter().map(|&i| labels[i]).collect();
        let mut tape = Tape::new();
        let steps = leaf_steps(&mut tape, &seqs, config.window);
        let last = model.encode_batch(&mut tape, &steps)?;
        let logits = model.head.forward(&mut tape, &model.store, last)?;
        let loss = tape.cross_entropy(logits, &targets);
        total_loss += tape.value(loss).item();
        batches += 1;
        let lv = tape.value(logits);
        for (r, &y) in targets.iter().enumerate() {
            if argmax_class(lv.row(r)).index() == y {
                correct += 1;
            }
        }
    }
    Ok((total_loss / batches as f64, correct as f64 / idx.len() as f64))
}

/// Seeded stratified split: per class, a `val_fraction` share (at least one
/// window when the class has two or more) goes to validation.
fn stratified_split(
    windows: &[LabeledWindow],
    val_fraction: f64,
    rng: &mut impl Rng,
) -> (Vec<usize>, Vec<usize>) {
    let mut by_class: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for (i, w) in windows.iter().enumerate() {
        by_class.entry(w.label.index()).or_default().push(i);
    }
    let mut train = Vec::new();
    let mut val = Vec::new();
    for (_, mut idx) in by_class {
        idx.shuffle(rng);
        let n_val = if idx.len() >= 2 {
            ((idx.len() as f64 * val_fraction).round() as usize).clamp(1, idx.len() - 1)
        } else {
            0
        };
        val.extend_from_slice(&idx[..n_val]);
        train.extend_from_slice(&idx[n_val..]);
    }
    train.sort_unstable();
    val.sort_unstable();
    (train, val)
}

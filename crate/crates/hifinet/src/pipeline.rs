//! Experiment driver: the command implementations behind the CLI. Each
//! command reads/writes dataset directories under the configured output
//! directory, so stages can run standalone or chained by `cmd_all`. Every
//! stage is deterministic under the config seed; reruns with unchanged
//! inputs reproduce outputs byte for byte.

use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;

use crate::config::{rate_dir_name, DataSource, ExperimentConfig};
use crate::edge::{argmax_class, train_edge, EdgeModel, LogRecord};
use crate::energy::{tradeoff_table, write_tradeoff_csv, TradeoffRow, WindowPredictions};
use crate::error::{Error, Result};
use crate::eval::{
    export_embeddings, pr_curve_auprc, write_metrics_csv, write_pr_csv, ConfusionMatrix,
    MetricsReport, ReportMeta,
};
use crate::ign::{node_states_from_edge, train_ign, GraphSample, IgnModel};
use crate::ingest::{
    align, generate_synthetic, make_windows, parse_intel, parse_node_csv, restrict_series,
    AlignedPanel, LabeledWindow, NormStats,
};
use crate::inject::{build_dataset, FaultClass, FaultMask, InjectionPlan};
use crate::nn::{checkpoint, softmax_slice, Tensor2};
use crate::topology::Topology;

pub const TOOLKIT_VERSION: &str = env!("CARGO_PKG_VERSION");

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path.display().to_string(), e))
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Config(format!("serialization failed: {e}")))?;
    fs::write(path, text).map_err(|e| Error::io(path.display().to_string(), e))
}

/// Writes the provenance manifest every output directory carries.
fn write_manifest(config: &ExperimentConfig, dir: &Path, extra: serde_json::Value) -> Result<()> {
    let manifest = json!({
        "toolkit_version": TOOLKIT_VERSION,
        "config_hash": config.hash(),
        "seed": config.seed,
        "detail": extra,
    });
    write_json(&manifest, &dir.join("manifest.json"))
}

fn write_train_log(log: &[LogRecord], path: &Path) -> Result<()> {
    let mut out = String::from("phase,epoch,split,loss,accuracy\n");
    for r in log {
        out.push_str(&format!(
            "{},{},{},{:.9e},{}\n",
            r.phase,
            r.epoch,
            r.split,
            r.loss,
            r.accuracy.map_or(String::new(), |a| format!("{a:.6}")),
        ));
    }
    fs::write(path, out).map_err(|e| Error::io(path.display().to_string(), e))
}

/// Loads or synthesizes the clean aligned panel per the data source.
pub fn load_clean_panel(config: &ExperimentConfig) -> Result<AlignedPanel> {
    let mut series = match config.data.source {
        DataSource::Synthetic => generate_synthetic(&config.synthetic_config())?,
        DataSource::Intel => {
            let path = config.data.intel_path.as_ref().expect("validated");
            let parsed = parse_intel(path)?;
            parsed.series
        }
        DataSource::Csv => {
            let paths = config.data.csv_paths.as_ref().expect("validated");
            let mut out = Vec::new();
            for (node_id, path) in paths {
                out.push(parse_node_csv(path, *node_id)?);
            }
            out
        }
    };
    // Node selection: explicit ids, else the first six by id.
    if let Some(ids) = &config.data.node_ids {
        series.retain(|s| ids.contains(&s.node_id));
        if series.len() != ids.len() {
            let missing: Vec<u32> = ids
                .iter()
                .filter(|id| !series.iter().any(|s| s.node_id == **id))
                .copied()
                .collect();
            return Err(Error::Ingest(format!(
                "selected nodes missing from the dataset: {missing:?}"
            )));
        }
    } else if matches!(config.data.source, DataSource::Intel) {
        let mut ids: Vec<u32> = series.iter().map(|s| s.node_id).collect();
        ids.sort_unstable();
        let keep: Vec<u32> = ids.into_iter().take(6).collect();
        series.retain(|s| keep.contains(&s.node_id));
    }
    if let Some((start, end)) = config.data.time_range {
        series = restrict_series(&series, start, end)?;
    }
    align(&series, config.data.grid_interval_s)
}

/// The cluster topology: from the configured file, else a deterministic
/// chain over the panel's nodes with the first node as cluster head.
pub fn load_topology(config: &ExperimentConfig, panel: &AlignedPanel) -> Result<Topology> {
    let topo = match &config.topology_file {
        Some(path) => Topology::parse_file(path)?,
        None => {
            let spacing = config.default_topology_spacing_m;
            let nodes: Vec<(u32, f64, f64)> = panel
                .node_ids
                .iter()
                .enumerate()
                .map(|(i, &id)| (id, i as f64 * spacing, 0.0))
                .collect();
            let edges: Vec<(u32, u32)> = panel
                .node_ids
                .windows(2)
                .map(|pair| (pair[0], pair[1]))
                .collect();
            Topology::new(nodes, &edges, panel.node_ids[0])?
        }
    };
    if topo.node_ids() != panel.node_ids.as_slice() {
        return Err(Error::Config(format!(
            "topology nodes {:?} do not match panel nodes {:?}",
            topo.node_ids(),
            panel.node_ids
        )));
    }
    Ok(topo)
}

/// Generates the clean panel and default topology under `output_dir/clean/`.
pub fn cmd_gen_synthetic(config: &ExperimentConfig) -> Result<PathBuf> {
    let panel = load_clean_panel(config)?;
    let topology = load_topology(config, &panel)?;
    let dir = config.output_dir.join("clean");
    create_dir(&dir)?;
    panel.write_csv(&dir.join("panel.csv"))?;
    topology.write_file(&dir.join("topology.txt"))?;
    write_manifest(
        config,
        &dir,
        json!({
            "kind": "clean",
            "nodes": panel.node_ids,
            "samples": panel.grid.len(),
        }),
    )?;
    println!(
        "clean panel: {} nodes x {} samples -> {}",
        panel.node_ids.len(),
        panel.grid.len(),
        dir.display()
    );
    Ok(dir)
}

/// Builds one injected dataset per configured rate.
pub fn cmd_inject(config: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    let clean = load_clean_panel(config)?;
    let params = config.fault_params();
    let mut dirs = Vec::new();
    for &rate in &config.injection.rates {
        let plan = InjectionPlan::one_fault_per_node(&clean.node_ids, rate, params.clone(), config.seed);
        let (panel, mask) = build_dataset(&clean, &plan)?;
        let dir = config.output_dir.join(rate_dir_name(rate));
        create_dir(&dir)?;
        panel.write_csv(&dir.join("panel.csv"))?;
        mask.write_csv(&panel.grid, &dir.join("mask.csv"))?;
        write_manifest(
            config,
            &dir,
            json!({
                "kind": "dataset",
                "plan": plan,
                "realized_fault_fraction": mask.fault_fraction(),
            }),
        )?;
        println!(
            "dataset {}: fault fraction {:.4} -> {}",
            rate_dir_name(rate),
            mask.fault_fraction(),
            dir.display()
        );
        dirs.push(dir);
    }
    Ok(dirs)
}

/// A loaded dataset directory plus the windowing and split shared by every
/// downstream stage.
pub struct Dataset {
    pub dir: PathBuf,
    pub panel: AlignedPanel,
    pub mask: FaultMask,
    pub windows: Vec<LabeledWindow>,
    /// Window start positions, ascending.
    pub starts: Vec<usize>,
    pub train_starts: Vec<usize>,
    pub test_starts: Vec<usize>,
}

impl Dataset {
    pub fn train_windows(&self) -> Vec<LabeledWindow> {
        self.windows
            .iter()
            .filter(|w| self.train_starts.binary_search(&w.start_index).is_ok())
            .cloned()
            .collect()
    }

    pub fn test_windows(&self) -> Vec<LabeledWindow> {
        self.windows
            .iter()
            .filter(|w| self.test_starts.binary_search(&w.start_index).is_ok())
            .cloned()
            .collect()
    }

    /// Windows of one start position in panel node order.
    pub fn window_group(&self, start: usize) -> Vec<&LabeledWindow> {
        let mut group: Vec<&LabeledWindow> = self
            .windows
            .iter()
            .filter(|w| w.start_index == start)
            .collect();
        group.sort_by_key(|w| w.node_id);
        group
    }
}

/// Loads a dataset directory and recomputes windows and the seeded
/// train/test split over start positions.
pub fn load_dataset(config: &ExperimentConfig, rate: f64) -> Result<Dataset> {
    let dir = config.output_dir.join(rate_dir_name(rate));
    let panel = AlignedPanel::read_csv(&dir.join("panel.csv"))?;
    let mask = FaultMask::read_csv(&dir.join("mask.csv"))?;
    let windows = make_windows(&panel, config.windows.w, config.windows.stride, &mask)?;
    let mut starts: Vec<usize> = windows.iter().map(|w| w.start_index).collect();
    starts.sort_unstable();
    starts.dedup();

    let mut shuffled = starts.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(0x5117));
    shuffled.shuffle(&mut rng);
    let n_train = ((starts.len() as f64) * config.split.train_fraction).round() as usize;
    let n_train = n_train.clamp(1, starts.len().saturating_sub(1).max(1));
    let mut train_starts: Vec<usize> = shuffled[..n_train].to_vec();
    let mut test_starts: Vec<usize> = shuffled[n_train..].to_vec();
    train_starts.sort_unstable();
    test_starts.sort_unstable();
    Ok(Dataset {
        dir,
        panel,
        mask,
        windows,
        starts,
        train_starts,
        test_starts,
    })
}

/// Trains the edge classifier on a dataset's training windows and writes the
/// checkpoint, sidecar metadata, and training log.
pub fn cmd_train_edge(config: &ExperimentConfig, rate: f64) -> Result<PathBuf> {
    let dataset = load_dataset(config, rate)?;
    let train_windows = dataset.train_windows();
    let edge_config = config.edge_config();
    let (model, log) = train_edge(&edge_config, &train_windows)?;
    let ckpt = dataset.dir.join("edge.ckpt");
    checkpoint::save(&model.store, &ckpt)?;
    write_json(
        &json!({
            "window": model.window,
            "hidden_dims": model.hidden_dims,
            "norm": model.norm,
            "seed": config.seed,
            "config_hash": config.hash(),
        }),
        &dataset.dir.join("edge_meta.json"),
    )?;
    write_train_log(&log, &dataset.dir.join("train_edge.log.csv"))?;
    println!(
        "edge model ({} params) -> {}",
        model.store.num_values(),
        ckpt.display()
    );
    Ok(ckpt)
}

/// Loads the trained edge model for a dataset.
pub fn load_edge_model(config: &ExperimentConfig, dataset: &Dataset) -> Result<EdgeModel> {
    let ckpt = dataset.dir.join("edge.ckpt");
    if !ckpt.exists() {
        return Err(Error::Checkpoint(format!(
            "{} not found; run train-edge first",
            ckpt.display()
        )));
    }
    let store = checkpoint::load(&ckpt)?;
    let meta_text = fs::read_to_string(dataset.dir.join("edge_meta.json"))
        .map_err(|e| Error::io("edge_meta.json", e))?;
    let meta: serde_json::Value = serde_json::from_str(&meta_text)
        .map_err(|e| Error::Checkpoint(format!("edge_meta.json: {e}")))?;
    let norm: NormStats = serde_json::from_value(meta["norm"].clone())
        .map_err(|e| Error::Checkpoint(format!("edge_meta.json norm: {e}")))?;
    let window = meta["window"].as_u64().unwrap_or(config.windows.w as u64) as usize;
    let hidden_dims: Vec<usize> = serde_json::from_value(meta["hidden_dims"].clone())
        .map_err(|e| Error::Checkpoint(format!("edge_meta.json hidden_dims: {e}")))?;
    EdgeModel::from_parts(store, norm, window, hidden_dims)
}

/// Edge outputs for every window group: (H0 per start, logits per start).
fn edge_states_for_starts(
    dataset: &Dataset,
    edge: &EdgeModel,
    starts: &[usize],
) -> Result<Vec<(usize, Tensor2, Tensor2, Vec<FaultClass>)>> {
    let mut out = Vec::with_capacity(starts.len());
    for &start in starts {
        let group = dataset.window_group(start);
        let owned: Vec<LabeledWindow> = group.iter().map(|w| (*w).clone()).collect();
        let (logits, embeddings) = edge.forward_batch(&owned)?;
        let h0 = node_states_from_edge(&logits, &embeddings)?;
        let labels: Vec<FaultClass> = owned.iter().map(|w| w.label).collect();
        out.push((start, h0, logits, labels));
    }
    Ok(out)
}

/// Trains the graph stage on frozen edge outputs and writes the checkpoint,
/// metadata, and training log.
pub fn cmd_train_ign(config: &ExperimentConfig, rate: f64) -> Result<PathBuf> {
    let dataset = load_dataset(config, rate)?;
    let edge = load_edge_model(config, &dataset)?;
    let topology = load_topology(config, &dataset.panel)?;
    let states = edge_states_for_starts(&dataset, &edge, &dataset.train_starts)?;
    let d0 = 6 + edge.embedding_dim();
    let samples: Vec<GraphSample> = states
        .into_iter()
        .map(|(_, h0, _, labels)| GraphSample { h0, labels })
        .collect();
    let ign_config = config.ign_config();
    let (model, log) = train_ign(&ign_config, d0, &samples, &topology)?;
    let ckpt = dataset.dir.join("ign.ckpt");
    checkpoint::save(&model.store, &ckpt)?;
    write_json(
        &json!({
            "d0": d0,
            "ign": ign_config,
            "seed": config.seed,
            "config_hash": config.hash(),
        }),
        &dataset.dir.join("ign_meta.json"),
    )?;
    write_train_log(&log, &dataset.dir.join("train_ign.log.csv"))?;
    println!(
        "ign model ({} params) -> {}",
        model.store.num_values(),
        ckpt.display()
    );
    Ok(ckpt)
}

pub fn load_ign_model(config: &ExperimentConfig, dataset: &Dataset, d0: usize) -> Result<IgnModel> {
    let ckpt = dataset.dir.join("ign.ckpt");
    if !ckpt.exists() {
        return Err(Error::Checkpoint(format!(
            "{} not found; run train-ign first",
            ckpt.display()
        )));
    }
    let store = checkpoint::load(&ckpt)?;
    IgnModel::from_store(store, d0, &config.ign_config())
}

/// Everything evaluation and the tradeoff study need for the test split.
pub struct TestInference {
    pub test_starts: Vec<usize>,
    pub true_labels: WindowPredictions,
    pub edge_preds: WindowPredictions,
    pub net_preds: WindowPredictions,
    pub edge_probs: Vec<Vec<f64>>,
    pub net_probs: Vec<Vec<f64>>,
    pub flat_true: Vec<FaultClass>,
    pub embeddings: Vec<(String, FaultClass, Vec<f64>)>,
}

pub fn run_test_inference(
    config: &ExperimentConfig,
    dataset: &Dataset,
) -> Result<TestInference> {
    let edge = load_edge_model(config, dataset)?;
    let topology = load_topology(config, &dataset.panel)?;
    let d0 = 6 + edge.embedding_dim();
    let ign = load_ign_model(config, dataset, d0)?;

    let states = edge_states_for_starts(dataset, &edge, &dataset.test_starts)?;
    let mut true_labels = Vec::new();
    let mut edge_preds = Vec::new();
    let mut net_preds = Vec::new();
    let mut edge_probs = Vec::new();
    let mut net_probs = Vec::new();
    let mut flat_true = Vec::new();
    let mut embeddings = Vec::new();
    for (start, h0, edge_logits, labels) in &states {
        let net_logits = ign.forward(h0, &topology)?;
        let mut edge_row = Vec::new();
        let mut net_row = Vec::new();
        for node in 0..labels.len() {
            edge_row.push(argmax_class(edge_logits.row(node)));
            net_row.push(argmax_class(net_logits.row(node)));
            edge_probs.push(softmax_slice(edge_logits.row(node)));
            net_probs.push(softmax_slice(net_logits.row(node)));
            flat_true.push(labels[node]);
            let node_id = dataset.panel.node_ids[node];
            embeddings.push((
                format!("n{node_id}_s{start}"),
                labels[node],
                h0.row(node)[6..].to_vec(),
            ));
        }
        true_labels.push(labels.clone());
        edge_preds.push(edge_row);
        net_preds.push(net_row);
    }
    Ok(TestInference {
        test_starts: dataset.test_starts.clone(),
        true_labels,
        edge_preds,
        net_preds,
        edge_probs,
        net_probs,
        flat_true,
        embeddings,
    })
}

fn report_for(
    name: &str,
    dataset_name: &str,
    rate: f64,
    seed: u64,
    flat_true: &[FaultClass],
    preds: &WindowPredictions,
    probs: &[Vec<f64>],
) -> Result<(MetricsReport, Vec<crate::eval::PrPoint>)> {
    let flat_preds: Vec<FaultClass> = preds.iter().flatten().copied().collect();
    let cm = ConfusionMatrix::from_labels(flat_true, &flat_preds)?;
    let prob_matrix = Tensor2::from_rows(probs);
    let (points, auprc) = pr_curve_auprc(flat_true, &prob_matrix)?;
    let report = MetricsReport::from_confusion(
        ReportMeta {
            dataset: dataset_name.to_string(),
            fault_rate: rate,
            model: name.to_string(),
            seed,
        },
        cm,
        Some(auprc),
    )?;
    Ok((report, points))
}

/// Evaluates both models on the test split and writes all report artifacts.
pub fn cmd_evaluate(config: &ExperimentConfig, rate: f64) -> Result<(MetricsReport, MetricsReport)> {
    let dataset = load_dataset(config, rate)?;
    let inference = run_test_inference(config, &dataset)?;
    let dataset_name = match config.data.source {
        DataSource::Synthetic => "synthetic",
        DataSource::Intel => "intel",
        DataSource::Csv => "csv",
    };
    let (edge_report, edge_pr) = report_for(
        "edge-only",
        dataset_name,
        rate,
        config.seed,
        &inference.flat_true,
        &inference.edge_preds,
        &inference.edge_probs,
    )?;
    let (net_report, net_pr) = report_for(
        "hifinet",
        dataset_name,
        rate,
        config.seed,
        &inference.flat_true,
        &inference.net_preds,
        &inference.net_probs,
    )?;

    edge_report.write_json(&dataset.dir.join("metrics_edge.json"))?;
    net_report.write_json(&dataset.dir.join("metrics_hifinet.json"))?;
    write_metrics_csv(
        &[&edge_report, &net_report],
        &dataset.dir.join("metrics.csv"),
    )?;
    write_pr_csv(&edge_pr, &dataset.dir.join("pr_edge.csv"))?;
    write_pr_csv(&net_pr, &dataset.dir.join("pr_hifinet.csv"))?;
    edge_report
        .confusion
        .write_csv(&dataset.dir.join("confusion_edge.csv"))?;
    net_report
        .confusion
        .write_csv(&dataset.dir.join("confusion_hifinet.csv"))?;
    export_embeddings(&inference.embeddings, &dataset.dir.join("embeddings.csv"))?;
    println!(
        "{}: edge accuracy {:.4}, hifinet accuracy {:.4} -> {}",
        rate_dir_name(rate),
        edge_report.accuracy,
        net_report.accuracy,
        dataset.dir.display()
    );
    Ok((edge_report, net_report))
}

/// Worker cap for the tradeoff fan-out, from `HIFINET_WORKERS` (default 4).
fn worker_count() -> usize {
    std::env::var("HIFINET_WORKERS")
        .ok()
        .and_then(|v| v.parse().ok())
        .filter(|&n| n > 0)
        .unwrap_or(4)
}

/// Runs the accuracy/energy tradeoff over the configured time delays and
/// writes the plot-ready table. Time delays fan out across worker threads
/// with deterministic result ordering.
pub fn cmd_tradeoff(config: &ExperimentConfig, rate: f64) -> Result<Vec<TradeoffRow>> {
    let dataset = load_dataset(config, rate)?;
    let inference = run_test_inference(config, &dataset)?;
    let topology = load_topology(config, &dataset.panel)?;
    let t_values = &config.tradeoff.t_values;

    let workers = worker_count().min(t_values.len().max(1));
    let chunks: Vec<Vec<usize>> = t_values
        .chunks(t_values.len().div_ceil(workers))
        .map(|c| c.to_vec())
        .collect();
    let mut rows: Vec<TradeoffRow> = Vec::new();
    let results: Result<Vec<Vec<TradeoffRow>>> = std::thread::scope(|scope| {
        let handles: Vec<_> = chunks
            .iter()
            .map(|chunk| {
                let inference = &inference;
                let topology = &topology;
                let energy = &config.energy;
                let w = config.windows.w;
                scope.spawn(move || {
                    tradeoff_table(
                        &inference.true_labels,
                        &inference.edge_preds,
                        &inference.net_preds,
                        topology,
                        w,
                        chunk,
                        energy,
                    )
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("tradeoff worker panicked"))
            .collect()
    });
    for part in results? {
        rows.extend(part);
    }
    rows.sort_by_key(|r| r.t);
    write_tradeoff_csv(&rows, &dataset.dir.join("tradeoff.csv"))?;
    println!(
        "tradeoff over {} delays -> {}",
        rows.len(),
        dataset.dir.join("tradeoff.csv").display()
    );
    Ok(rows)
}

/// Full pipeline: inject every rate, train both stages, evaluate, run the
/// tradeoff study, and write a cross-rate summary.
pub fn cmd_all(config: &ExperimentConfig) -> Result<()> {
    create_dir(&config.output_dir)?;
    write_manifest(config, &config.output_dir, json!({"kind": "run"}))?;
    cmd_gen_synthetic(config)?;
    cmd_inject(config)?;
    let mut reports = Vec::new();
    for &rate in &config.injection.rates {
        cmd_train_edge(config, rate)?;
        cmd_train_ign(config, rate)?;
        let (edge_report, net_report) = cmd_evaluate(config, rate)?;
        cmd_tradeoff(config, rate)?;
        reports.push(edge_report);
        reports.push(net_report);
    }
    let refs: Vec<&MetricsReport> = reports.iter().collect();
    write_metrics_csv(&refs, &config.output_dir.join("metrics_summary.csv"))?;
    println!(
        "run complete -> {}",
        config.output_dir.join("metrics_summary.csv").display()
    );
    Ok(())
}

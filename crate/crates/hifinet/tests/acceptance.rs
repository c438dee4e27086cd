//! Acceptance suite: one test per release criterion, each printing a
//! `[PASS]`/`[SKIP]` line. Run with `cargo test --test acceptance --
//! --nocapture` to see the lines.

use std::path::PathBuf;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use hifinet::config::ExperimentConfig;
use hifinet::edge::argmax_class;
use hifinet::energy::{
    link_energy, per_round_energy, round_count, schedule_energy, EnergyParams,
};
use hifinet::eval::{
    accuracy, f1_drop, pr_curve_auprc, ConfusionMatrix, MetricsReport, ReportMeta,
};
use hifinet::ign::IgnModel;
use hifinet::ingest::{align, generate_synthetic, make_windows, SyntheticConfig};
use hifinet::inject::{
    build_dataset, sample_variance, FaultClass, FaultParams, InjectionPlan, StuckMode,
};
use hifinet::nn::{gradient_check, Act, Dense, Lstm, ParamStore, Tape, Tensor2};
use hifinet::pipeline;
use hifinet::topology::Topology;

fn random_tensor(rows: usize, cols: usize, rng: &mut impl Rng) -> Tensor2 {
    Tensor2::from_vec(
        rows,
        cols,
        (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect(),
    )
}

fn jitter(store: &mut ParamStore, rng: &mut impl Rng, scale: f64) {
    for name in store.names() {
        for v in store.value_mut(&name).data_mut() {
            *v += rng.gen_range(-scale..scale);
        }
    }
}

/// Criterion 1: every differentiable primitive matches central finite
/// differences (eps 1e-5) within 1e-4 relative error over >= 20 seeds,
/// in under a minute.
#[test]
fn criterion_1_gradient_suite() {
    let started = Instant::now();
    let eps = 1e-5;
    let tol = 1e-4;
    let mut worst: f64 = 0.0;

    for seed in 0..20u64 {
        // Dense layer under every activation.
        for (k, act) in [Act::Identity, Act::Relu, Act::LeakyRelu, Act::Tanh, Act::Sigmoid]
            .into_iter()
            .enumerate()
        {
            let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed * 8 + k as u64);
            let layer = Dense::new("d", 4, 3, act);
            let mut store = ParamStore::new();
            layer.init(&mut store, &mut rng);
            jitter(&mut store, &mut rng, 0.4);
            let x = random_tensor(3, 4, &mut rng);
            let target = random_tensor(3, 3, &mut rng);
            let report = gradient_check(&mut store, eps, |tape, store| {
                let xn = tape.leaf(x.clone());
                let y = layer.forward(tape, store, xn)?;
                Ok(tape.mse(y, &target))
            })
            .unwrap();
            assert!(report.max_rel_err < tol, "dense {act:?} seed {seed}: {}", report.worst);
            worst = worst.max(report.max_rel_err);
        }

        // LSTM cell over a short sequence.
        {
            let mut rng = ChaCha8Rng::seed_from_u64(2000 + seed);
            let layer = Lstm::new("l", 3, 4);
            let mut store = ParamStore::new();
            layer.init(&mut store, &mut rng);
            let steps: Vec<Tensor2> = (0..5).map(|_| random_tensor(2, 3, &mut rng)).collect();
            let report = gradient_check(&mut store, eps, |tape, store| {
                let ids: Vec<_> = steps.iter().map(|s| tape.leaf(s.clone())).collect();
                let hidden = layer.forward_steps(tape, store, &ids)?;
                let stacked = tape.concat_rows(&hidden);
                let sq = tape.mul(stacked, stacked);
                Ok(tape.mean(sq))
            })
            .unwrap();
            assert!(report.max_rel_err < tol, "lstm seed {seed}: {}", report.worst);
            worst = worst.max(report.max_rel_err);
        }

        // Softmax + cross-entropy on random logits.
        {
            let mut rng = ChaCha8Rng::seed_from_u64(3000 + seed);
            let mut store = ParamStore::new();
            store.insert("logits", random_tensor(4, 6, &mut rng));
            let targets: Vec<usize> = (0..4).map(|_| rng.gen_range(0..6)).collect();
            let report = gradient_check(&mut store, eps, |tape, store| {
                let z = tape.param(store, "logits");
                Ok(tape.cross_entropy(z, &targets))
            })
            .unwrap();
            assert!(report.max_rel_err < tol, "xent seed {seed}: {}", report.worst);
            worst = worst.max(report.max_rel_err);
        }

        // FiLM generators: scale/shift denses driving a modulation.
        {
            let mut rng = ChaCha8Rng::seed_from_u64(4000 + seed);
            let gamma = Dense::new("g", 1, 5, Act::Identity);
            let beta = Dense::new("b", 1, 5, Act::Identity);
            let mut store = ParamStore::new();
            gamma.init(&mut store, &mut rng);
            beta.init(&mut store, &mut rng);
            let h0 = random_tensor(4, 5, &mut rng);
            let conf = Tensor2::from_vec(4, 1, (0..4).map(|_| rng.gen_range(0.2..1.0)).collect());
            let target = random_tensor(4, 5, &mut rng);
            let report = gradient_check(&mut store, eps, |tape, store| {
                let h = tape.leaf(h0.clone());
                let c = tape.leaf(conf.clone());
                let gm = gamma.forward(tape, store, c)?;
                let bt = beta.forward(tape, store, c)?;
                let scaled = tape.mul(gm, h);
                let out = tape.add(scaled, bt);
                Ok(tape.mse(out, &target))
            })
            .unwrap();
            assert!(report.max_rel_err < tol, "film seed {seed}: {}", report.worst);
            worst = worst.max(report.max_rel_err);
        }

        // One GAT layer on a 4-node chain (isolated from the full model).
        {
            let mut rng = ChaCha8Rng::seed_from_u64(5000 + seed);
            let cfg = hifinet::ign::IgnConfig {
                k_iterations: 1,
                gat_layers: 1,
                gat_hidden: 4,
                dropout: 0.0,
                ..Default::default()
            };
            let mut model = IgnModel::init(7, &cfg).unwrap();
            jitter(&mut model.store, &mut rng, 0.4);
            let topo = Topology::line(4, 20.0).unwrap();
            let mask = topo.adjacency_matrix(true);
            let h0 = random_tensor(4, 7, &mut rng);
            let targets: Vec<usize> = (0..4).map(|_| rng.gen_range(0..6)).collect();
            let mut store = std::mem::take(&mut model.store);
            let report = gradient_check(&mut store, eps, |tape, store| {
                let h = tape.leaf(h0.clone());
                let logits = model.forward_on_tape(tape, store, h, &mask, None)?;
                Ok(tape.cross_entropy(logits, &targets))
            })
            .unwrap();
            assert!(report.max_rel_err < tol, "gat seed {seed}: {}", report.worst);
            worst = worst.max(report.max_rel_err);
        }

        // Full iterative forward on a 3-node graph.
        {
            let mut rng = ChaCha8Rng::seed_from_u64(6000 + seed);
            let cfg = hifinet::ign::IgnConfig {
                k_iterations: 3,
                gat_layers: 2,
                gat_hidden: 4,
                dropout: 0.0,
                ..Default::default()
            };
            let mut model = IgnModel::init(7, &cfg).unwrap();
            jitter(&mut model.store, &mut rng, 0.4);
            let topo = Topology::line(3, 20.0).unwrap();
            let mask = topo.adjacency_matrix(true);
            let h0 = random_tensor(3, 7, &mut rng);
            let targets: Vec<usize> = (0..3).map(|_| rng.gen_range(0..6)).collect();
            let mut store = std::mem::take(&mut model.store);
            let report = gradient_check(&mut store, eps, |tape, store| {
                let h = tape.leaf(h0.clone());
                let logits = model.forward_on_tape(tape, store, h, &mask, None)?;
                Ok(tape.cross_entropy(logits, &targets))
            })
            .unwrap();
            assert!(report.max_rel_err < tol, "ign seed {seed}: {}", report.worst);
            worst = worst.max(report.max_rel_err);
        }
    }

    let elapsed = started.elapsed();
    assert!(elapsed.as_secs() < 60, "gradient suite took {elapsed:?}");
    println!(
        "[PASS] criterion 1: gradient suite, max relative error {worst:.3e} < 1e-4 over 20 seeds in {elapsed:.2?}"
    );
}

fn synthetic_panel(noise_sigma: f64, daily_amplitude: f64, seed: u64) -> hifinet::ingest::AlignedPanel {
    let series = generate_synthetic(&SyntheticConfig {
        n_nodes: 6,
        n_days: 30,
        sample_interval_s: 3600,
        base_temp: 20.0,
        daily_amplitude,
        noise_sigma,
        seed,
    })
    .unwrap();
    align(&series, 3600).unwrap()
}

/// Contiguous runs of one class in a mask row.
fn runs_of(classes: &[FaultClass], class: FaultClass) -> Vec<(usize, usize)> {
    let mut runs = Vec::new();
    let mut start = None;
    for (i, c) in classes.iter().enumerate() {
        match (start, *c == class) {
            (None, true) => start = Some(i),
            (Some(s), false) => {
                runs.push((s, i - s));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        runs.push((s, classes.len() - s));
    }
    runs
}

/// Criterion 2: injection statistics on a 6-node, 30-day synthetic panel.
#[test]
fn criterion_2_injection_statistics() {
    let started = Instant::now();
    let noise_sigma = 0.5;
    let panel = synthetic_panel(noise_sigma, 4.0, 11);
    let w = 24;

    // Realized fraction within one persistent episode length of each rate.
    let params = FaultParams::defaults_for_window(w);
    let total = (panel.node_ids.len() * panel.grid.len()) as f64;
    let episode_tolerance = params.episode_len_persistent as f64 / total;
    for rate in [0.05, 0.10, 0.15, 0.20] {
        let plan = InjectionPlan::one_fault_per_node(&panel.node_ids, rate, params.clone(), 33);
        let (injected, mask) = build_dataset(&panel, &plan).unwrap();
        let realized = mask.fault_fraction();
        assert!(
            (realized - rate).abs() <= episode_tolerance,
            "rate {rate}: realized {realized}"
        );

        if (rate - 0.20).abs() < 1e-12 {
            // Hardover: episode offset is the configured bias.
            let row = mask
                .classes
                .iter()
                .position(|r| r.iter().any(|c| *c == FaultClass::Hardover))
                .expect("hardover node");
            for (start, len) in runs_of(&mask.classes[row], FaultClass::Hardover) {
                for t in start..start + len {
                    let diff = injected.matrix.get(row, t) - panel.matrix.get(row, t);
                    assert!((diff - 5.0).abs() < 1e-9, "hardover offset {diff}");
                }
            }

            // Stuck-at: episode variance is exactly zero.
            let row = mask
                .classes
                .iter()
                .position(|r| r.iter().any(|c| *c == FaultClass::StuckAt))
                .expect("stuck node");
            for (start, len) in runs_of(&mask.classes[row], FaultClass::StuckAt) {
                let seg = &injected.matrix.row(row)[start..start + len];
                assert_eq!(sample_variance(seg), 0.0, "stuck variance");
            }

            // Erratic: injected-deviation variance over clean noise variance
            // lands in [3, 5] (target 4 from the doubled noise std).
            let row = mask
                .classes
                .iter()
                .position(|r| r.iter().any(|c| *c == FaultClass::Erratic))
                .expect("erratic node");
            let mut deviations = Vec::new();
            for (start, len) in runs_of(&mask.classes[row], FaultClass::Erratic) {
                for t in start..start + len {
                    deviations.push(injected.matrix.get(row, t) - panel.matrix.get(row, t));
                }
            }
            assert!(deviations.len() >= 100, "erratic sample count {}", deviations.len());
            let ratio = sample_variance(&deviations) / (noise_sigma * noise_sigma);
            assert!((3.0..=5.0).contains(&ratio), "erratic variance ratio {ratio}");
        }
    }

    // Drift: least-squares slope on noise-free (constant-clean) segments.
    let flat = synthetic_panel(0.0, 0.0, 12);
    let plan = InjectionPlan::one_fault_per_node(&flat.node_ids, 0.20, params.clone(), 44);
    let (injected, mask) = build_dataset(&flat, &plan).unwrap();
    let row = mask
        .classes
        .iter()
        .position(|r| r.iter().any(|c| *c == FaultClass::Drift))
        .expect("drift node");
    let mut checked = 0;
    for (start, len) in runs_of(&mask.classes[row], FaultClass::Drift) {
        if len < 10 {
            continue;
        }
        let seg = &injected.matrix.row(row)[start..start + len];
        let n = len as f64;
        let mx = (n - 1.0) / 2.0;
        let my = seg.iter().sum::<f64>() / n;
        let mut num = 0.0;
        let mut den = 0.0;
        for (i, y) in seg.iter().enumerate() {
            num += (i as f64 - mx) * (y - my);
            den += (i as f64 - mx) * (i as f64 - mx);
        }
        let slope = num / den;
        assert!((slope - 0.3).abs() < 0.01, "drift slope {slope}");
        checked += 1;
    }
    assert!(checked > 0, "no drift episodes long enough to fit");

    let elapsed = started.elapsed();
    assert!(elapsed.as_secs() < 10, "injection statistics took {elapsed:?}");
    println!("[PASS] criterion 2: injection statistics (offset 5, slope 0.3, stuck var 0, erratic ratio in [3,5], rates within one episode) in {elapsed:.2?}");
}

/// Criterion 3: window labels equal the brute-force any-sample scan on
/// 10,000 randomized windows with zero mismatches.
#[test]
fn criterion_3_labeling_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut windows_checked = 0usize;
    while windows_checked < 10_000 {
        let n_nodes = rng.gen_range(1..=4usize);
        let t = rng.gen_range(30..120usize);
        let w = rng.gen_range(2..=24usize);
        let stride = rng.gen_range(1..=3usize);
        let node_ids: Vec<u32> = (1..=n_nodes as u32).collect();
        let mut mask = hifinet::inject::FaultMask::all_normal(&node_ids, t);
        // Random single-fault-type-per-node episodes.
        for row in 0..n_nodes {
            let fault = FaultClass::FAULTS[rng.gen_range(0..5)];
            for _ in 0..rng.gen_range(0..4) {
                let len = rng.gen_range(1..=10.min(t));
                let start = rng.gen_range(0..=t - len);
                for c in &mut mask.classes[row][start..start + len] {
                    *c = fault;
                }
            }
        }
        let panel = hifinet::ingest::AlignedPanel {
            node_ids: node_ids.clone(),
            grid: (0..t as i64).collect(),
            matrix: random_tensor(n_nodes, t, &mut rng),
        };
        let windows = make_windows(&panel, w, stride, &mask).unwrap();
        for win in &windows {
            let row = node_ids.iter().position(|&id| id == win.node_id).unwrap();
            // Brute-force any-sample scan.
            let mut expected = FaultClass::Normal;
            for t in win.start_index..win.start_index + w {
                if mask.classes[row][t] != FaultClass::Normal {
                    expected = mask.classes[row][t];
                    break;
                }
            }
            assert_eq!(win.label, expected, "window at {}", win.start_index);
        }
        windows_checked += windows.len();
    }
    println!("[PASS] criterion 3: labeling oracle, {windows_checked} windows, zero mismatches");
}

/// Criterion 4: energy model hand values, exact schedule arithmetic, and
/// strictly increasing efficiency.
#[test]
fn criterion_4_energy_model() {
    let params = EnergyParams::default();
    let e = link_energy(256, 100.0, &params).unwrap();
    assert!(
        ((e - 3.968e-5) / 3.968e-5).abs() < 1e-12,
        "link energy {e}"
    );

    let topo = Topology::line(6, 50.0).unwrap();
    let n_windows = 144;
    let per_round = per_round_energy(&topo, 24, &params).unwrap();
    let mut previous_ee = 0.0;
    for t in 0..10 {
        let ledger = schedule_energy(&topo, n_windows, t, 24, &params).unwrap();
        // Exact: total = rounds x per-round constant (repeated addition).
        let rounds = round_count(n_windows, t);
        let mut expected = 0.0;
        for _ in 0..rounds {
            expected += per_round;
        }
        assert_eq!(ledger.total_joules(), expected, "schedule total at t={t}");
        let ee = ledger.energy_efficiency();
        assert!(ee > previous_ee, "EE not strictly increasing at t={t}");
        previous_ee = ee;
    }
    println!(
        "[PASS] criterion 4: link_energy(256,100m)=3.968e-5 J, schedule total exact, EE strictly increasing over t=0..9"
    );
}

/// Criterion 5: trend reproduction on seeded synthetic data. Full pipeline
/// at 5% and 20% rates; the network must match or beat the edge-only stage,
/// reach weighted F1 >= 0.85 at 20%, and degrade no faster than edge-only.
#[test]
fn criterion_5_pipeline_trend() {
    let started = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let config_path = dir.path().join("exp.toml");
    std::fs::write(
        &config_path,
        r#"
seed = 42
output_dir = "run"

[data.synthetic]
n_nodes = 6
n_days = 30
noise_sigma = 0.5

[injection]
rates = [0.05, 0.20]
"#,
    )
    .unwrap();
    let config = ExperimentConfig::load(&config_path, &[], dir.path()).unwrap();
    pipeline::cmd_inject(&config).unwrap();

    let mut reports: Vec<(f64, MetricsReport, MetricsReport)> = Vec::new();
    for rate in [0.05, 0.20] {
        pipeline::cmd_train_edge(&config, rate).unwrap();
        pipeline::cmd_train_ign(&config, rate).unwrap();
        let (edge_report, net_report) = pipeline::cmd_evaluate(&config, rate).unwrap();
        reports.push((rate, edge_report, net_report));
    }

    let (_, edge_5, net_5) = &reports[0];
    let (_, edge_20, net_20) = &reports[1];

    // Accuracy delta >= 0 at both rates.
    for (rate, edge, net) in &reports {
        assert!(
            net.accuracy >= edge.accuracy,
            "rate {rate}: network {:.4} below edge {:.4}",
            net.accuracy,
            edge.accuracy
        );
    }
    // Weighted F1 >= 0.85 at the 20% stress level.
    assert!(
        net_20.weighted_f1 >= 0.85,
        "weighted F1 {:.4} below 0.85",
        net_20.weighted_f1
    );
    // Stability: the network's F1 drop from 5% to 20% does not exceed the
    // edge-only drop.
    let net_drop = f1_drop(net_5, net_20);
    let edge_drop = f1_drop(edge_5, edge_20);
    assert!(
        net_drop <= edge_drop,
        "network drop {net_drop:.2} exceeds edge drop {edge_drop:.2}"
    );

    let elapsed = started.elapsed();
    assert!(elapsed.as_secs() < 900, "pipeline took {elapsed:?}");
    println!(
        "[PASS] criterion 5: delta at 20% = {:+.2} pts, weighted F1 {:.2}%, F1 drop {:.2} vs edge {:.2} pts in {elapsed:.2?}",
        (net_20.accuracy - edge_20.accuracy) * 100.0,
        net_20.weighted_f1 * 100.0,
        net_drop,
        edge_drop
    );
}

/// Criterion 6: metric implementations match independent brute-force
/// oracles within 1e-9, and the published F1-drop example reproduces.
#[test]
fn criterion_6_metrics_correctness() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _case in 0..30 {
        let n = 50;
        let true_labels: Vec<FaultClass> = (0..n)
            .map(|_| FaultClass::from_index(rng.gen_range(0..6)).unwrap())
            .collect();
        let preds: Vec<FaultClass> = (0..n)
            .map(|_| FaultClass::from_index(rng.gen_range(0..6)).unwrap())
            .collect();
        let cm = ConfusionMatrix::from_labels(&true_labels, &preds).unwrap();

        // Accuracy oracle: direct comparison.
        let acc_oracle = true_labels
            .iter()
            .zip(&preds)
            .filter(|(a, b)| a == b)
            .count() as f64
            / n as f64;
        assert!((accuracy(&cm).unwrap() - acc_oracle).abs() < 1e-9);

        // Weighted precision / F1 oracle: per-class counting from labels.
        let mut wp_oracle = 0.0;
        let mut wf_oracle = 0.0;
        for c in FaultClass::ALL {
            let support = true_labels.iter().filter(|l| **l == c).count() as f64;
            let predicted = preds.iter().filter(|p| **p == c).count() as f64;
            let tp = true_labels
                .iter()
                .zip(&preds)
                .filter(|(l, p)| **l == c && **p == c)
                .count() as f64;
            let precision = if predicted == 0.0 { 0.0 } else { tp / predicted };
            let recall = if support == 0.0 { 0.0 } else { tp / support };
            let f1 = if precision + recall == 0.0 {
                0.0
            } else {
                2.0 * precision * recall / (precision + recall)
            };
            wp_oracle += support / n as f64 * precision;
            wf_oracle += support / n as f64 * f1;
        }
        assert!((hifinet::eval::weighted_precision(&cm).unwrap() - wp_oracle).abs() < 1e-9);
        assert!((hifinet::eval::weighted_f1(&cm).unwrap() - wf_oracle).abs() < 1e-9);

        // AUPRC oracle: exhaustive threshold enumeration with full rescans.
        let probs = {
            let mut rows = Vec::with_capacity(n);
            for _ in 0..n {
                let raw: Vec<f64> = (0..6).map(|_| rng.gen_range(0.01..1.0)).collect();
                let s: f64 = raw.iter().sum();
                rows.push(raw.into_iter().map(|v| v / s).collect::<Vec<f64>>());
            }
            Tensor2::from_rows(&rows)
        };
        let (_, auprc) = pr_curve_auprc(&true_labels, &probs).unwrap();
        let auprc_oracle = brute_force_auprc(&true_labels, &probs);
        assert!(
            (auprc - auprc_oracle).abs() < 1e-9,
            "auprc {auprc} vs oracle {auprc_oracle}"
        );
    }

    // Published worked example: 94.70 - 92.64 = 2.06 points.
    let mk = |wf1: f64| MetricsReport {
        meta: ReportMeta::default(),
        accuracy: 0.0,
        weighted_precision: 0.0,
        weighted_f1: wf1,
        auprc: None,
        per_class: Vec::new(),
        confusion: ConfusionMatrix::from_counts({
            let mut c = [[0u64; 6]; 6];
            c[0][0] = 1;
            c
        }),
    };
    let drop = f1_drop(&mk(0.9470), &mk(0.9264));
    assert!((drop - 2.06).abs() < 1e-9, "drop {drop}");
    println!("[PASS] criterion 6: metrics match brute-force oracles within 1e-9; 94.70-92.64=2.06 reproduced");
}

/// Independent AUPRC: enumerate every distinct pooled score as a threshold,
/// rescan all (sample, class) pairs at each, integrate trapezoidally.
fn brute_force_auprc(true_labels: &[FaultClass], probs: &Tensor2) -> f64 {
    let mut pairs: Vec<(f64, bool)> = Vec::new();
    for (r, label) in true_labels.iter().enumerate() {
        for class in FaultClass::FAULTS {
            pairs.push((probs.get(r, class.index()), *label == class));
        }
    }
    let positives = pairs.iter().filter(|(_, p)| *p).count() as f64;
    let mut thresholds: Vec<f64> = pairs.iter().map(|(s, _)| *s).collect();
    thresholds.sort_by(|a, b| b.partial_cmp(a).unwrap());
    thresholds.dedup();
    let mut points: Vec<(f64, f64)> = Vec::new();
    for threshold in thresholds {
        let mut tp = 0.0;
        let mut fp = 0.0;
        for (score, positive) in &pairs {
            if *score >= threshold {
                if *positive {
                    tp += 1.0;
                } else {
                    fp += 1.0;
                }
            }
        }
        points.push((tp / positives, tp / (tp + fp)));
    }
    points.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut area = 0.0;
    let (mut prev_r, mut prev_p) = (0.0, points.first().map_or(1.0, |p| p.1));
    for (r, p) in points {
        area += (r - prev_r) * (p + prev_p) / 2.0;
        prev_r = r;
        prev_p = p;
    }
    area
}

/// Criterion 7: two identical `cmd_all` runs produce byte-identical metric
/// and tradeoff CSVs.
#[test]
fn criterion_7_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let config_path = dir.path().join("exp.toml");
    std::fs::write(
        &config_path,
        r#"
seed = 7
output_dir = "run"

[data.synthetic]
n_nodes = 6
n_days = 8
noise_sigma = 0.5

[injection]
rates = [0.2]

[edge]
pretrain_epochs = 2
finetune_epochs = 4

[ign]
epochs = 5
"#,
    )
    .unwrap();
    let config = ExperimentConfig::load(&config_path, &[], dir.path()).unwrap();

    let targets = [
        PathBuf::from("metrics_summary.csv"),
        PathBuf::from("rate_20/metrics.csv"),
        PathBuf::from("rate_20/tradeoff.csv"),
    ];
    pipeline::cmd_all(&config).unwrap();
    let first: Vec<Vec<u8>> = targets
        .iter()
        .map(|t| std::fs::read(config.output_dir.join(t)).unwrap())
        .collect();
    pipeline::cmd_all(&config).unwrap();
    for (t, bytes) in targets.iter().zip(&first) {
        let second = std::fs::read(config.output_dir.join(t)).unwrap();
        assert_eq!(bytes, &second, "{} differs between runs", t.display());
    }
    println!("[PASS] criterion 7: repeated cmd_all runs byte-identical on metric and tradeoff CSVs");
}

/// Criterion 8 (conditional): with the real Intel Lab file present, the
/// pipeline's 20%-rate accuracy lands within 5 points of the 88.87
/// reference. Skipped, not failed, when the file is absent.
#[test]
fn criterion_8_intel_reference() {
    let path = std::env::var("HIFINET_INTEL_DATA")
        .map(PathBuf::from)
        .unwrap_or_else(|_| PathBuf::from("data/intel.txt"));
    if !path.exists() {
        println!(
            "[SKIP] criterion 8: Intel Lab file not found at {} (set HIFINET_INTEL_DATA)",
            path.display()
        );
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let config_path = dir.path().join("exp.toml");
    std::fs::write(
        &config_path,
        format!(
            r#"
seed = 42
output_dir = "run"

[data]
source = "intel"
intel_path = "{}"
grid_interval_s = 31
time_range = [1078531200, 1078704000]

[injection]
rates = [0.2]
"#,
            path.display()
        ),
    )
    .unwrap();
    let config = ExperimentConfig::load(&config_path, &[], dir.path()).unwrap();
    pipeline::cmd_inject(&config).unwrap();
    pipeline::cmd_train_edge(&config, 0.2).unwrap();
    pipeline::cmd_train_ign(&config, 0.2).unwrap();
    let (_, net_report) = pipeline::cmd_evaluate(&config, 0.2).unwrap();
    let accuracy_pct = net_report.accuracy * 100.0;
    assert!(
        (accuracy_pct - 88.87).abs() <= 5.0,
        "intel accuracy {accuracy_pct:.2} outside 88.87 +- 5"
    );
    println!("[PASS] criterion 8: Intel 20% accuracy {accuracy_pct:.2} within 88.87 +- 5");
}

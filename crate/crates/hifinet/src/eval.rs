//! Classification metrics and report emission: confusion matrices, accuracy,
//! weighted precision/recall/F1, micro-averaged precision-recall curves with
//! AUPRC, and plot-ready CSV/JSON renderings.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inject::FaultClass;
use crate::nn::Tensor2;

pub const NUM_CLASSES: usize = 6;

/// 6x6 counts; rows are true classes, columns predictions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    counts: [[u64; NUM_CLASSES]; NUM_CLASSES],
}

impl ConfusionMatrix {
    pub fn from_labels(true_labels: &[FaultClass], predicted: &[FaultClass]) -> Result<Self> {
        if true_labels.len() != predicted.len() {
            return Err(Error::Metrics(format!(
                "label count mismatch: {} true vs {} predicted",
                true_labels.len(),
                predicted.len()
            )));
        }
        let mut counts = [[0u64; NUM_CLASSES]; NUM_CLASSES];
        for (t, p) in true_labels.iter().zip(predicted) {
            counts[t.index()][p.index()] += 1;
        }
        Ok(ConfusionMatrix { counts })
    }

    pub fn from_counts(counts: [[u64; NUM_CLASSES]; NUM_CLASSES]) -> Self {
        ConfusionMatrix { counts }
    }

    pub fn count(&self, true_class: FaultClass, predicted: FaultClass) -> u64 {
        self.counts[true_class.index()][predicted.index()]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn true_positives(&self, class: FaultClass) -> u64 {
        self.counts[class.index()][class.index()]
    }

    /// Row sum: number of true instances of the class.
    pub fn support(&self, class: FaultClass) -> u64 {
        self.counts[class.index()].iter().sum()
    }

    /// Column sum: number of predictions of the class.
    pub fn predicted(&self, class: FaultClass) -> u64 {
        self.counts.iter().map(|row| row[class.index()]).sum()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::from("true\\pred");
        for c in FaultClass::ALL {
            out.push_str(&format!(",{c}"));
        }
        out.push('\n');
        for t in FaultClass::ALL {
            out.push_str(t.name());
            for p in FaultClass::ALL {
                out.push_str(&format!(",{}", self.count(t, p)));
            }
            out.push('\n');
        }
        std::fs::write(path, out).map_err(|e| Error::io(path.display().to_string(), e))
    }
}

/// Overall correctness: sum of diagonal counts over total.
pub fn accuracy(cm: &ConfusionMatrix) -> Result<f64> {
    let n = cm.total();
    if n == 0 {
        return Err(Error::Metrics("accuracy undefined on an empty matrix".into()));
    }
    let tp: u64 = FaultClass::ALL.iter().map(|&c| cm.true_positives(c)).sum();
    Ok(tp as f64 / n as f64)
}

/// Precision of one class; 0 when the class was never predicted.
pub fn precision(cm: &ConfusionMatrix, class: FaultClass) -> f64 {
    let denom = cm.predicted(class);
    if denom == 0 {
        0.0
    } else {
        cm.true_positives(class) as f64 / denom as f64
    }
}

/// Recall of one class; 0 when the class has no true instances.
pub fn recall(cm: &ConfusionMatrix, class: FaultClass) -> f64 {
    let denom = cm.support(class);
    if denom == 0 {
        0.0
    } else {
        cm.true_positives(class) as f64 / denom as f64
    }
}

/// Harmonic mean of precision and recall; 0 when both vanish.
pub fn f1_score(cm: &ConfusionMatrix, class: FaultClass) -> f64 {
    let p = precision(cm, class);
    let r = recall(cm, class);
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// Support-weighted average precision over all classes.
pub fn weighted_precision(cm: &ConfusionMatrix) -> Result<f64> {
    weighted_by_support(cm, precision)
}

/// Support-weighted average F1 over all classes.
pub fn weighted_f1(cm: &ConfusionMatrix) -> Result<f64> {
    weighted_by_support(cm, f1_score)
}

fn weighted_by_support(
    cm: &ConfusionMatrix,
    metric: fn(&ConfusionMatrix, FaultClass) -> f64,
) -> Result<f64> {
    let n = cm.total();
    if n == 0 {
        return Err(Error::Metrics("weighted metric undefined on an empty matrix".into()));
    }
    // Single division keeps the diagonal case exactly 1.0.
    let weighted: f64 = FaultClass::ALL
        .iter()
        .map(|&c| cm.support(c) as f64 * metric(cm, c))
        .sum();
    Ok(weighted / n as f64)
}

/// One point of a precision-recall curve.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PrPoint {
    pub recall: f64,
    pub precision: f64,
    pub threshold: f64,
}

/// Micro-averaged one-vs-rest precision-recall curve over the five fault
/// classes, with AUPRC by trapezoidal integration over recall.
///
/// Every (sample, fault class) pair contributes a score P(class); the pair
/// is a positive when the sample's true label is that class. Normal windows
/// contribute only negatives, so precision reflects false alarms on clean
/// data too.
pub fn pr_curve_auprc(
    true_labels: &[FaultClass],
    probabilities: &Tensor2,
) -> Result<(Vec<PrPoint>, f64)> {
    if probabilities.rows() != true_labels.len() || probabilities.cols() != NUM_CLASSES {
        return Err(Error::Metrics(format!(
            "probability matrix is {}x{}, expected {}x{NUM_CLASSES}",
            probabilities.rows(),
            probabilities.cols(),
            true_labels.len()
        )));
    }
    for r in 0..probabilities.rows() {
        let s: f64 = probabilities.row(r).iter().sum();
        if (s - 1.0).abs() > 1e-6 {
            return Err(Error::Metrics(format!(
                "probability row {r} sums to {s}, not 1"
            )));
        }
    }

    // Pooled (score, is_positive) pairs across the five fault classes.
    let mut pairs: Vec<(f64, bool)> = Vec::with_capacity(true_labels.len() * 5);
    for (r, &label) in true_labels.iter().enumerate() {
        for class in FaultClass::FAULTS {
            pairs.push((probabilities.get(r, class.index()), label == class));
        }
    }
    let positives = pairs.iter().filter(|(_, p)| *p).count();
    if positives == 0 {
        return Err(Error::Metrics(
            "PR curve undefined: no faulty instances in the evaluation set".into(),
        ));
    }

    // Descending score sweep; one curve point per distinct threshold.
    pairs.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap_or(std::cmp::Ordering::Equal));
    let mut points = Vec::new();
    let mut tp = 0u64;
    let mut fp = 0u64;
    let mut i = 0usize;
    while i < pairs.len() {
        let threshold = pairs[i].0;
        while i < pairs.len() && pairs[i].0 == threshold {
            if pairs[i].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push(PrPoint {
            recall: tp as f64 / positives as f64,
            precision: tp as f64 / (tp + fp) as f64,
            threshold,
        });
    }

    Ok((points.clone(), trapezoid_over_recall(&points)))
}

/// Trapezoidal area under precision(recall), anchored at recall 0 with the
/// first point's precision.
fn trapezoid_over_recall(points: &[PrPoint]) -> f64 {
    let mut area = 0.0;
    let mut prev_recall = 0.0;
    let mut prev_precision = points.first().map_or(1.0, |p| p.precision);
    for p in points {
        area += (p.recall - prev_recall) * (p.precision + prev_precision) / 2.0;
        prev_recall = p.recall;
        prev_precision = p.precision;
    }
    area
}

pub fn write_pr_csv(points: &[PrPoint], path: &Path) -> Result<()> {
    let mut out = String::from("recall,precision,threshold\n");
    for p in points {
        out.push_str(&format!("{:.9},{:.9},{:.9}\n", p.recall, p.precision, p.threshold));
    }
    std::fs::write(path, out).map_err(|e| Error::io(path.display().to_string(), e))
}

/// Per-class metric block of a report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub class: String,
    pub support: u64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Context describing what a report was computed on.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ReportMeta {
    pub dataset: String,
    pub fault_rate: f64,
    pub model: String,
    pub seed: u64,
}

/// Everything the evaluation produces for one (model, dataset) pair.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsReport {
    pub meta: ReportMeta,
    pub accuracy: f64,
    pub weighted_precision: f64,
    pub weighted_f1: f64,
    /// Absent when the evaluation had no probability scores.
    pub auprc: Option<f64>,
    pub per_class: Vec<ClassMetrics>,
    pub confusion: ConfusionMatrix,
}

impl MetricsReport {
    pub fn from_confusion(
        meta: ReportMeta,
        cm: ConfusionMatrix,
        auprc: Option<f64>,
    ) -> Result<Self> {
        let per_class = FaultClass::ALL
            .iter()
            .map(|&c| ClassMetrics {
                class: c.name().to_string(),
                support: cm.support(c),
                precision: precision(&cm, c),
                recall: recall(&cm, c),
                f1: f1_score(&cm, c),
            })
            .collect();
        Ok(MetricsReport {
            meta,
            accuracy: accuracy(&cm)?,
            weighted_precision: weighted_precision(&cm)?,
            weighted_f1: weighted_f1(&cm)?,
            auprc,
            per_class,
            confusion: cm,
        })
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)
            .map_err(|e| Error::Metrics(format!("report serialization failed: {e}")))?;
        std::fs::write(path, text).map_err(|e| Error::io(path.display().to_string(), e))
    }
}

/// Drop in weighted F1 between a low-rate and a high-rate report, in
/// percentage points.
pub fn f1_drop(report_low_rate: &MetricsReport, report_high_rate: &MetricsReport) -> f64 {
    (report_low_rate.weighted_f1 - report_high_rate.weighted_f1) * 100.0
}

/// Appends reports as rows of a flat metric grid (one row per report):
/// model, dataset, fault rate, and the headline metrics in percent.
pub fn write_metrics_csv(reports: &[&MetricsReport], path: &Path) -> Result<()> {
    let mut out = String::from("model,dataset,fault_rate,accuracy,weighted_precision,weighted_f1,auprc\n");
    for r in reports {
        out.push_str(&format!(
            "{},{},{:.4},{:.4},{:.4},{:.4},{}\n",
            r.meta.model,
            r.meta.dataset,
            r.meta.fault_rate,
            r.accuracy * 100.0,
            r.weighted_precision * 100.0,
            r.weighted_f1 * 100.0,
            r.auprc.map_or(String::from(""), |a| format!("{a:.6}")),
        ));
    }
    std::fs::write(path, out).map_err(|e| Error::io(path.display().to_string(), e))
}

/// Exports penultimate-layer activations for external embedding tools:
/// window id, true label, then one column per activation.
pub fn export_embeddings(
    rows: &[(String, FaultClass, Vec<f64>)],
    path: &Path,
) -> Result<()> {
    let width = rows.first().map_or(0, |(_, _, v)| v.len());
    let mut out = String::from("window,label");
    for k in 0..width {
        out.push_str(&format!(",e{k}"));
    }
    out.push('\n');
    for (id, label, values) in rows {
        out.push_str(&format!("{id},{label}"));
        for v in values {
            out.push_str(&format!(",{v:.9e}"));
        }
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path.display().to_string(), e))
}

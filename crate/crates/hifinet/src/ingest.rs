//! Dataset ingestion: real-file parsing, synthetic generation, grid
//! alignment, and windowing into classification units.

use std::fs;
use std::path::Path;

use chrono::NaiveDateTime;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inject::{FaultClass, FaultMask};
use crate::nn::Tensor2;

/// One node's raw measurement stream. Timestamps are seconds since epoch,
/// strictly increasing; values are finite.
#[derive(Debug, Clone, PartialEq)]
pub struct ReadingSeries {
    pub node_id: u32,
    pub timestamps: Vec<i64>,
    pub values: Vec<f64>,
}

impl ReadingSeries {
    /// Validates the invariants: non-empty, strictly increasing timestamps,
    /// finite values.
    pub fn new(node_id: u32, timestamps: Vec<i64>, values: Vec<f64>) -> Result<Self> {
        if timestamps.is_empty() || timestamps.len() != values.len() {
            return Err(Error::Ingest(format!(
                "node {node_id}: series needs matching, non-empty timestamps and values"
            )));
        }
        if timestamps.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Ingest(format!(
                "node {node_id}: timestamps are not strictly increasing"
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Ingest(format!("node {node_id}: non-finite value")));
        }
        Ok(ReadingSeries {
            node_id,
            timestamps,
            values,
        })
    }

    /// Sorts by timestamp and keeps the last value on duplicates, then
    /// validates.
    pub fn from_unordered(node_id: u32, mut samples: Vec<(i64, f64)>) -> Result<Self> {
        // Stable sort keeps file order within a timestamp so "last wins".
        samples.sort_by_key(|(t, _)| *t);
        let mut timestamps = Vec::with_capacity(samples.len());
        let mut values = Vec::with_capacity(samples.len());
        for (t, v) in samples {
            if timestamps.last() == Some(&t) {
                *values.last_mut().expect("paired") = v;
            } else {
                timestamps.push(t);
                values.push(v);
            }
        }
        ReadingSeries::new(node_id, timestamps, values)
    }

    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }
}

/// All nodes resampled onto one shared timestamp grid; row i of `matrix`
/// belongs to `node_ids[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignedPanel {
    pub node_ids: Vec<u32>,
    pub grid: Vec<i64>,
    pub matrix: Tensor2,
}

impl AlignedPanel {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::from("timestamp");
        for id in &self.node_ids {
            out.push_str(&format!(",node_{id}"));
        }
        out.push('\n');
        for (t, ts) in self.grid.iter().enumerate() {
            out.push_str(&ts.to_string());
            for row in 0..self.node_ids.len() {
                out.push_str(&format!(",{:.12e}", self.matrix.get(row, t)));
            }
            out.push('\n');
        }
        fs::write(path, out).map_err(|e| Error::io(path.display().to_string(), e))
    }

    pub fn read_csv(path: &Path) -> Result<AlignedPanel> {
        let text =
            fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::EmptyDataset(format!("{}: empty panel file", path.display())))?;
        let mut node_ids = Vec::new();
        for col in header.split(',').skip(1) {
            let id = col
                .strip_prefix("node_")
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::Ingest(format!("bad panel column '{col}'")))?;
            node_ids.push(id);
        }
        let mut grid = Vec::new();
        let mut columns: Vec<Vec<f64>> = vec![Vec::new(); node_ids.len()];
        for (lineno, line) in lines.enumerate() {
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != node_ids.len() + 1 {
                return Err(Error::Ingest(format!(
                    "panel line {}: expected {} fields, got {}",
                    lineno + 2,
                    node_ids.len() + 1,
                    fields.len()
                )));
            }
            let ts = fields[0]
                .parse()
                .map_err(|_| Error::Ingest(format!("panel line {}: bad timestamp", lineno + 2)))?;
            grid.push(ts);
            for (k, f) in fields[1..].iter().enumerate() {
                let v: f64 = f
                    .parse()
                    .map_err(|_| Error::Ingest(format!("panel line {}: bad value", lineno + 2)))?;
                columns[k].push(v);
            }
        }
        if grid.is_empty() {
            return Err(Error::EmptyDataset(format!(
                "{}: panel has no rows",
                path.display()
            )));
        }
        let t = grid.len();
        let mut matrix = Tensor2::zeros(node_ids.len(), t);
        for (row, col) in columns.iter().enumerate() {
            matrix.row_mut(row).copy_from_slice(col);
        }
        Ok(AlignedPanel {
            node_ids,
            grid,
            matrix,
        })
    }
}

/// A window of `w` consecutive grid samples from one node, carrying its
/// ground-truth class under the any-faulty-sample rule.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledWindow {
    pub node_id: u32,
    pub start_index: usize,
    pub values: Vec<f64>,
    pub label: FaultClass,
}

/// Outcome of parsing an Intel Lab flat file: per-mote temperature series
/// plus the count of lines that were dropped as malformed.
#[derive(Debug)]
pub struct IntelParse {
    pub series: Vec<ReadingSeries>,
    pub dropped_lines: usize,
}

/// Parses the Intel Lab whitespace layout: date, time, epoch, moteid,
/// temperature, humidity, light, voltage. Only the temperature channel is
/// kept. Malformed or incomplete lines are dropped and counted.
pub fn parse_intel(path: &Path) -> Result<IntelParse> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut per_node: std::collections::BTreeMap<u32, Vec<(i64, f64)>> = Default::default();
    let mut dropped = 0usize;
    for raw in text.lines() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() < 5 {
            dropped += 1;
            continue;
        }
        let stamp = format!("{} {}", fields[0], fields[1]);
        let ts = parse_datetime(&stamp);
        let mote: Option<u32> = fields[3].parse().ok();
        let temp: Option<f64> = fields[4].parse().ok();
        match (ts, mote, temp) {
            (Some(ts), Some(mote), Some(temp)) if temp.is_finite() => {
                per_node.entry(mote).or_default().push((ts, temp));
            }
            _ => dropped += 1,
        }
    }
    if per_node.is_empty() {
        return Err(Error::EmptyDataset(format!(
            "{}: no valid records",
            path.display()
        )));
    }
    let mut series = Vec::with_capacity(per_node.len());
    for (node_id, samples) in per_node {
        series.push(ReadingSeries::from_unordered(node_id, samples)?);
    }
    Ok(IntelParse {
        series,
        dropped_lines: dropped,
    })
}

fn parse_datetime(s: &str) -> Option<i64> {
    for fmt in [
        "%Y-%m-%d %H:%M:%S%.f",
        "%Y-%m-%d %H:%M:%S",
        "%Y-%m-%dT%H:%M:%S%.f",
        "%Y-%m-%dT%H:%M:%S",
    ] {
        if let Ok(dt) = NaiveDateTime::parse_from_str(s, fmt) {
            return Some(dt.and_utc().timestamp());
        }
    }
    None
}

/// Parses a two-column `timestamp,value` CSV for one node. Timestamps may be
/// epoch seconds or ISO-8601; rows are sorted and de-duplicated (last wins).
pub fn parse_node_csv(path: &Path, node_id: u32) -> Result<ReadingSeries> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::EmptyDataset(format!("{}: empty file", path.display())))?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    if cols != ["timestamp", "value"] {
        return Err(Error::Ingest(format!(
            "{} line 1: expected header 'timestamp,value', got '{header}'",
            path.display()
        )));
    }
    let mut samples = Vec::new();
    for (lineno, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let (ts_field, value_field) = line.split_once(',').ok_or_else(|| {
            Error::Ingest(format!("{} line {}: missing comma", path.display(), lineno + 1))
        })?;
        let ts_field = ts_field.trim();
        let ts = ts_field
            .parse::<i64>()
            .ok()
            .or_else(|| parse_datetime(ts_field))
            .or_else(|| {
                chrono::DateTime::parse_from_rfc3339(ts_field)
                    .ok()
                    .map(|dt| dt.timestamp())
            })
            .ok_or_else(|| {
                Error::Ingest(format!(
                    "{} line {}: unparseable timestamp '{ts_field}'",
                    path.display(),
                    lineno + 1
                ))
            })?;
        let value: f64 = value_field.trim().parse().map_err(|_| {
            Error::Ingest(format!(
                "{} line {}: unparseable value '{}'",
                path.display(),
                lineno + 1,
                value_field.trim()
            ))
        })?;
        samples.push((ts, value));
    }
    if samples.is_empty() {
        return Err(Error::EmptyDataset(format!(
            "{}: no data rows",
            path.display()
        )));
    }
    ReadingSeries::from_unordered(node_id, samples)
}

/// Parameters of the clean synthetic generator.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub n_nodes: usize,
    pub n_days: usize,
    pub sample_interval_s: i64,
    pub base_temp: f64,
    pub daily_amplitude: f64,
    pub noise_sigma: f64,
    pub seed: u64,
}

/// Generates clean per-node temperature series: a daily sinusoid around
/// `base_temp` plus a small per-node offset and Gaussian noise. Each node
/// draws from its own RNG stream, so output is independent of evaluation
/// order and bit-identical under the same seed.
pub fn generate_synthetic(cfg: &SyntheticConfig) -> Result<Vec<ReadingSeries>> {
    if cfg.n_nodes == 0 {
        return Err(Error::Config("n_nodes must be at least 1".into()));
    }
    if cfg.sample_interval_s <= 0 || cfg.n_days == 0 {
        return Err(Error::Config(
            "sample interval and day count must be positive".into(),
        ));
    }
    if cfg.noise_sigma < 0.0 {
        return Err(Error::Config("noise_sigma must be non-negative".into()));
    }
    let samples = (cfg.n_days as i64 * 86_400 / cfg.sample_interval_s) as usize;
    if samples == 0 {
        return Err(Error::Config("interval longer than the requested span".into()));
    }
    let mut out = Vec::with_capacity(cfg.n_nodes);
    for i in 0..cfg.n_nodes {
        let node_id = i as u32 + 1;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(u64::from(node_id));
        let offset: f64 = rng.gen_range(-1.0..1.0);
        let noise = if cfg.noise_sigma > 0.0 {
            Some(Normal::new(0.0, cfg.noise_sigma).expect("sigma positive"))
        } else {
            None
        };
        let mut timestamps = Vec::with_capacity(samples);
        let mut values = Vec::with_capacity(samples);
        for k in 0..samples {
            let t = k as i64 * cfg.sample_interval_s;
            let phase = 2.0 * std::f64::consts::PI * (t as f64) / 86_400.0;
            let mut v = cfg.base_temp + offset + cfg.daily_amplitude * phase.sin();
            if let Some(n) = &noise {
                v += n.sample(&mut rng);
            }
            timestamps.push(t);
            values.push(v);
        }
        out.push(ReadingSeries::new(node_id, timestamps, values)?);
    }
    Ok(out)
}

/// Drops readings outside [start, end]; errors (naming the node) when a node
/// has nothing left in range.
pub fn restrict_series(series: &[ReadingSeries], start: i64, end: i64) -> Result<Vec<ReadingSeries>> {
    let mut out = Vec::with_capacity(series.len());
    for s in series {
        let kept: Vec<(i64, f64)> = s
            .timestamps
            .iter()
            .zip(&s.values)
            .filter(|(t, _)| (start..=end).contains(*t))
            .map(|(t, v)| (*t, *v))
            .collect();
        if kept.is_empty() {
            return Err(Error::Alignment(format!(
                "node {} has no readings in range [{start}, {end}]",
                s.node_id
            )));
        }
        let (timestamps, values) = kept.into_iter().unzip();
        out.push(ReadingSeries::new(s.node_id, timestamps, values)?);
    }
    Ok(out)
}

/// Resamples every series onto a shared grid covering the intersection of
/// their time ranges. Interior gaps are filled by linear interpolation
/// between the nearest readings; grid points outside a node's range take the
/// nearest value.
pub fn align(series: &[ReadingSeries], grid_interval_s: i64) -> Result<AlignedPanel> {
    if series.is_empty() {
        return Err(Error::EmptyDataset("align called with no series".into()));
    }
    if grid_interval_s <= 0 {
        return Err(Error::Config("grid interval must be positive".into()));
    }
    let start = series
        .iter()
        .map(|s| s.timestamps[0])
        .max()
        .expect("non-empty");
    let end = series
        .iter()
        .map(|s| *s.timestamps.last().expect("non-empty"))
        .min()
        .expect("non-empty");
    if end < start {
        let latest = series
            .iter()
            .max_by_key(|s| s.timestamps[0])
            .expect("non-empty");
        return Err(Error::Alignment(format!(
            "node {} starts at {} after another node ends at {end}; no common range",
            latest.node_id, start
        )));
    }
    let grid: Vec<i64> = (0..)
        .map(|k| start + k * grid_interval_s)
        .take_while(|t| *t <= end)
        .collect();

    let mut sorted: Vec<&ReadingSeries> = series.iter().collect();
    sorted.sort_by_key(|s| s.node_id);
    let node_ids: Vec<u32> = sorted.iter().map(|s| s.node_id).collect();
    let mut matrix = Tensor2::zeros(node_ids.len(), grid.len());
    for (row, s) in sorted.iter().enumerate() {
        for (k, &t) in grid.iter().enumerate() {
            matrix.set(row, k, sample_at(s, t));
        }
    }
    Ok(AlignedPanel {
        node_ids,
        grid,
        matrix,
    })
}

fn sample_at(s: &ReadingSeries, t: i64) -> f64 {
    match s.timestamps.binary_search(&t) {
        Ok(i) => s.values[i],
        Err(i) => {
            if i == 0 {
                s.values[0]
            } else if i == s.timestamps.len() {
                s.values[s.values.len() - 1]
            } else {
                let (t0, t1) = (s.timestamps[i - 1], s.timestamps[i]);
                let (v0, v1) = (s.values[i - 1], s.values[i]);
                v0 + (v1 - v0) * ((t - t0) as f64) / ((t1 - t0) as f64)
            }
        }
    }
}

/// Cuts every node row into windows of `w` samples at the given stride. A
/// window is labeled with the fault type of any faulty sample inside it
/// (single-fault-per-node construction guarantees at most one type), else
/// Normal.
pub fn make_windows(
    panel: &AlignedPanel,
    w: usize,
    stride: usize,
    mask: &FaultMask,
) -> Result<Vec<LabeledWindow>> {
    let t = panel.grid.len();
    if w == 0 || w > t {
        return Err(Error::Config(format!(
            "window length {w} must be in 1..={t}"
        )));
    }
    if stride == 0 {
        return Err(Error::Config("stride must be at least 1".into()));
    }
    if mask.node_ids != panel.node_ids
        || mask.classes.iter().any(|row| row.len() != t)
    {
        return Err(Error::Config(
            "fault mask dimensions do not match the panel".into(),
        ));
    }
    let mut windows = Vec::new();
    for (row, &node_id) in panel.node_ids.iter().enumerate() {
        let mut start = 0usize;
        while start + w <= t {
            let label = mask.classes[row][start..start + w]
                .iter()
                .copied()
                .find(|c| *c != FaultClass::Normal)
                .unwrap_or(FaultClass::Normal);
            windows.push(LabeledWindow {
                node_id,
                start_index: start,
                values: panel.matrix.row(row)[start..start + w].to_vec(),
                label,
            });
            start += stride;
        }
    }
    Ok(windows)
}

/// Per-node z-score statistics, computed from training windows only.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NormStats {
    /// (node id, mean, std) triples; std floors at 1e-9.
    pub per_node: Vec<(u32, f64, f64)>,
}

impl NormStats {
    pub fn from_windows(windows: &[LabeledWindow]) -> Self {
        let mut acc: std::collections::BTreeMap<u32, (f64, f64, usize)> = Default::default();
        for w in windows {
            let e = acc.entry(w.node_id).or_insert((0.0, 0.0, 0));
            for &v in &w.values {
                e.0 += v;
                e.1 += v * v;
                e.2 += 1;
            }
        }
        let per_node = acc
            .into_iter()
            .map(|(id, (sum, sumsq, n))| {
                let n = n as f64;
                let mean = sum / n;
                let var = (sumsq / n - mean * mean).max(0.0);
                (id, mean, var.sqrt().max(1e-9))
            })
            .collect();
        NormStats { per_node }
    }

    pub fn lookup(&self, node_id: u32) -> Option<(f64, f64)> {
        self.per_node
            .iter()
            .find(|(id, _, _)| *id == node_id)
            .map(|(_, m, s)| (*m, *s))
    }

    /// Z-scores a window's values using its node's training statistics.
    /// Unknown nodes fall back to the global mean of the stats.
    pub fn normalize(&self, window: &LabeledWindow) -> Vec<f64> {
        let (mean, std) = self.lookup(window.node_id).unwrap_or_else(|| {
            let n = self.per_node.len() as f64;
            let m = self.per_node.iter().map(|(_, m, _)| m).sum::<f64>() / n;
            let s = self.per_node.iter().map(|(_, _, s)| s).sum::<f64>() / n;
            (m, s)
        });
        window.values.iter().map(|v| (v - mean) / std).collect()
    }
}

//! Synthetic sensor-fault injection.
//!
//! Five characteristic-based fault models operate on clean value arrays:
//! hardover (constant bias), drift (linearly growing offset), spike
//! (isolated single-sample jumps), erratic (inflated-variance noise), and
//! stuck-at (output frozen at a constant). [`build_dataset`] plants seeded
//! fault episodes across a panel at a target overall fault rate, one fault
//! type per faulty node, and returns the corrupted panel together with the
//! per-sample ground-truth mask.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::AlignedPanel;

/// The six mutually exclusive window classes; `Normal` is fault-free.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FaultClass {
    Normal,
    Hardover,
    Drift,
    Spike,
    Erratic,
    StuckAt,
}

impl FaultClass {
    pub const ALL: [FaultClass; 6] = [
        FaultClass::Normal,
        FaultClass::Hardover,
        FaultClass::Drift,
        FaultClass::Spike,
        FaultClass::Erratic,
        FaultClass::StuckAt,
    ];

    /// The five injectable (non-Normal) classes.
    pub const FAULTS: [FaultClass; 5] = [
        FaultClass::Hardover,
        FaultClass::Drift,
        FaultClass::Spike,
        FaultClass::Erratic,
        FaultClass::StuckAt,
    ];

    pub fn index(self) -> usize {
        match self {
            FaultClass::Normal => 0,
            FaultClass::Hardover => 1,
            FaultClass::Drift => 2,
            FaultClass::Spike => 3,
            FaultClass::Erratic => 4,
            FaultClass::StuckAt => 5,
        }
    }

    pub fn from_index(i: usize) -> Option<FaultClass> {
        FaultClass::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            FaultClass::Normal => "Normal",
            FaultClass::Hardover => "Hardover",
            FaultClass::Drift => "Drift",
            FaultClass::Spike => "Spike",
            FaultClass::Erratic => "Erratic",
            FaultClass::StuckAt => "StuckAt",
        }
    }
}

impl fmt::Display for FaultClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FaultClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FaultClass::ALL
            .into_iter()
            .find(|c| c.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Plan(format!("unknown fault class '{s}'")))
    }
}

/// How a stuck-at episode picks its frozen constant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StuckMode {
    /// Last clean value before onset (first clean value after the episode
    /// when the episode starts the series).
    NearestNormal,
    /// Seeded uniform draw within the clean series' observed min/max.
    RandomInRange,
}

/// Per-type injection parameters, with the experiment defaults.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FaultParams {
    pub b_hardover: f64,
    /// When set, each hardover node draws its bias uniformly from this range
    /// instead of using `b_hardover`.
    pub hardover_range: Option<(f64, f64)>,
    pub b0_drift: f64,
    pub b_spike: f64,
    /// Multiplier on the clean noise std; must exceed 1.
    pub erratic_sigma_factor: f64,
    pub stuck_mode: StuckMode,
    /// Episode length in samples for hardover, drift, and stuck-at.
    pub episode_len_persistent: usize,
    /// Episode length in samples for erratic.
    pub episode_len_erratic: usize,
}

impl FaultParams {
    /// Defaults tied to a window length: persistent episodes span two
    /// windows, erratic episodes one, so every fault type is observable
    /// within at least one window.
    pub fn defaults_for_window(w: usize) -> Self {
        FaultParams {
            b_hardover: 5.0,
            hardover_range: None,
            b0_drift: 0.3,
            b_spike: 3.0,
            erratic_sigma_factor: 2.0,
            stuck_mode: StuckMode::NearestNormal,
            episode_len_persistent: 2 * w,
            episode_len_erratic: w,
        }
    }
}

/// A complete, reproducible description of one injection run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InjectionPlan {
    /// One non-Normal fault type per faulty node.
    pub node_to_fault: Vec<(u32, FaultClass)>,
    /// Target fraction of faulty samples over the whole panel, in [0, 1).
    pub fault_rate: f64,
    pub params: FaultParams,
    pub seed: u64,
}

impl InjectionPlan {
    /// The default cluster assignment: the first five nodes get one fault
    /// type each (in taxonomy order) and remaining nodes stay clean.
    pub fn one_fault_per_node(node_ids: &[u32], fault_rate: f64, params: FaultParams, seed: u64) -> Self {
        let node_to_fault = node_ids
            .iter()
            .zip(FaultClass::FAULTS.iter())
            .map(|(&id, &c)| (id, c))
            .collect();
        InjectionPlan {
            node_to_fault,
            fault_rate,
            params,
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.fault_rate) {
            return Err(Error::Plan(format!(
                "fault_rate {} outside [0, 1)",
                self.fault_rate
            )));
        }
        let mut ids: Vec<u32> = self.node_to_fault.iter().map(|(id, _)| *id).collect();
        ids.sort_unstable();
        ids.dedup();
        if ids.len() != self.node_to_fault.len() {
            return Err(Error::Plan("node assigned more than one fault type".into()));
        }
        if self.node_to_fault.iter().any(|(_, c)| *c == FaultClass::Normal) {
            return Err(Error::Plan("node_to_fault must map to non-Normal classes".into()));
        }
        Ok(())
    }
}

/// Ground-truth per-sample fault classes, one row per panel node.
#[derive(Debug, Clone, PartialEq)]
pub struct FaultMask {
    pub node_ids: Vec<u32>,
    pub classes: Vec<Vec<FaultClass>>,
}

impl FaultMask {
    pub fn all_normal(node_ids: &[u32], samples: usize) -> Self {
        FaultMask {
            node_ids: node_ids.to_vec(),
            classes: vec![vec![FaultClass::Normal; samples]; node_ids.len()],
        }
    }

    pub fn fault_fraction(&self) -> f64 {
        let total: usize = self.classes.iter().map(|r| r.len()).sum();
        if total == 0 {
            return 0.0;
        }
        let faulty: usize = self
            .classes
            .iter()
            .flatten()
            .filter(|c| **c != FaultClass::Normal)
            .count();
        faulty as f64 / total as f64
    }

    /// Distinct non-Normal classes present in one node's row.
    pub fn node_fault_types(&self, row: usize) -> Vec<FaultClass> {
        let mut types: Vec<FaultClass> = self.classes[row]
            .iter()
            .copied()
            .filter(|c| *c != FaultClass::Normal)
            .collect();
        types.sort_unstable();
        types.dedup();
        types
    }

    pub fn write_csv(&self, grid: &[i64], path: &Path) -> Result<()> {
        let mut out = String::from("timestamp");
        for id in &self.node_ids {
            out.push_str(&format!(",node_{id}"));
        }
        out.push('\n');
        for (t, ts) in grid.iter().enumerate() {
            out.push_str(&ts.to_string());
            for row in &self.classes {
                out.push(',');
                out.push_str(row[t].name());
            }
            out.push('\n');
        }
        std::fs::write(path, out).map_err(|e| Error::io(path.display().to_string(), e))
    }

    pub fn read_csv(path: &Path) -> Result<FaultMask> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(path.display().to_string(), e))?;
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Ingest(format!("{}: empty mask file", path.display())))?;
        let mut node_ids = Vec::new();
        for col in header.split(',').skip(1) {
            let id = col
                .strip_prefix("node_")
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::Ingest(format!("bad mask column '{col}'")))?;
            node_ids.push(id);
        }
        let mut classes = vec![Vec::new(); node_ids.len()];
        for (lineno, line) in lines.enumerate() {
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != node_ids.len() + 1 {
                return Err(Error::Ingest(format!(
                    "mask line {}: expected {} fields, got {}",
                    lineno + 2,
                    node_ids.len() + 1,
                    fields.len()
                )));
            }
            for (k, f) in fields[1..].iter().enumerate() {
                classes[k].push(f.parse()?);
            }
        }
        Ok(FaultMask { node_ids, classes })
    }
}

fn check_ranges(len: usize, ranges: &[(usize, usize)]) -> Result<()> {
    let mut sorted: Vec<(usize, usize)> = ranges.to_vec();
    sorted.sort_unstable();
    let mut prev_end = 0usize;
    for (i, &(start, n)) in sorted.iter().enumerate() {
        if n == 0 {
            return Err(Error::Plan(format!("zero-length episode at {start}")));
        }
        if start + n > len {
            return Err(Error::Plan(format!(
                "episode {start}+{n} exceeds series length {len}"
            )));
        }
        if i > 0 && start < prev_end {
            return Err(Error::Plan(format!(
                "overlapping episodes at {start} (previous ends at {prev_end})"
            )));
        }
        prev_end = start + n;
    }
    Ok(())
}

/// Adds the constant bias `b` inside each (start, len) range.
pub fn inject_hardover(values: &[f64], ranges: &[(usize, usize)], b: f64) -> Result<Vec<f64>> {
    check_ranges(values.len(), ranges)?;
    let mut out = values.to_vec();
    for &(start, n) in ranges {
        for v in &mut out[start..start + n] {
            *v += b;
        }
    }
    Ok(out)
}

/// Adds `n * b0` to the n-th episode sample (n = 1..=len from onset).
pub fn inject_drift(
    values: &[f64],
    episode_start: usize,
    episode_len: usize,
    b0: f64,
) -> Result<Vec<f64>> {
    check_ranges(values.len(), &[(episode_start, episode_len)])?;
    let mut out = values.to_vec();
    for k in 0..episode_len {
        out[episode_start + k] += (k + 1) as f64 * b0;
    }
    Ok(out)
}

/// Adds `b_spike` at each index; indices must be isolated (no two adjacent).
pub fn inject_spike(values: &[f64], spike_indices: &[usize], b_spike: f64) -> Result<Vec<f64>> {
    let mut sorted = spike_indices.to_vec();
    sorted.sort_unstable();
    for (i, &idx) in sorted.iter().enumerate() {
        if idx >= values.len() {
            return Err(Error::Plan(format!(
                "spike index {idx} exceeds series length {}",
                values.len()
            )));
        }
        if i > 0 && idx - sorted[i - 1] < 2 {
            return Err(Error::Plan(format!(
                "adjacent spike indices {} and {idx}",
                sorted[i - 1]
            )));
        }
    }
    let mut out = values.to_vec();
    for &idx in spike_indices {
        out[idx] += b_spike;
    }
    Ok(out)
}

/// Adds zero-mean Gaussian noise with std `sigma_factor * clean_sigma`
/// inside the ranges; deterministic under the seed.
pub fn inject_erratic(
    values: &[f64],
    ranges: &[(usize, usize)],
    sigma_factor: f64,
    clean_sigma: f64,
    seed: u64,
) -> Result<Vec<f64>> {
    if sigma_factor <= 1.0 {
        return Err(Error::Plan(format!(
            "erratic sigma factor {sigma_factor} must exceed 1"
        )));
    }
    check_ranges(values.len(), ranges)?;
    let mut out = values.to_vec();
    let std = sigma_factor * clean_sigma;
    if std == 0.0 {
        return Ok(out);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, std).expect("std is positive");
    for &(start, n) in ranges {
        for v in &mut out[start..start + n] {
            *v += normal.sample(&mut rng);
        }
    }
    Ok(out)
}

/// Freezes the episode at a single constant per [`StuckMode`].
pub fn inject_stuck(
    values: &[f64],
    episode_start: usize,
    episode_len: usize,
    mode: StuckMode,
    seed: u64,
) -> Result<Vec<f64>> {
    check_ranges(values.len(), &[(episode_start, episode_len)])?;
    let constant = match mode {
        StuckMode::NearestNormal => {
            if episode_start > 0 {
                values[episode_start - 1]
            } else if episode_start + episode_len < values.len() {
                values[episode_start + episode_len]
            } else {
                return Err(Error::Plan(
                    "stuck-at episode covers the whole series; no clean value to freeze at".into(),
                ));
            }
        }
        StuckMode::RandomInRange => {
            let clean: Vec<f64> = values
                .iter()
                .enumerate()
                .filter(|(i, _)| *i < episode_start || *i >= episode_start + episode_len)
                .map(|(_, v)| *v)
                .collect();
            let (lo, hi) = clean.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            });
            if !lo.is_finite() {
                return Err(Error::Plan(
                    "stuck-at episode covers the whole series; no clean range to draw from".into(),
                ));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            if lo == hi {
                lo
            } else {
                rng.gen_range(lo..hi)
            }
        }
    };
    let mut out = values.to_vec();
    for v in &mut out[episode_start..episode_start + episode_len] {
        *v = constant;
    }
    Ok(out)
}

/// Welford sample variance (n-1 divisor). Exactly zero on constant input,
/// which matters when asserting stuck-at episodes have no spread.
pub fn sample_variance(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let mut mean = 0.0;
    let mut m2 = 0.0;
    for (k, &x) in values.iter().enumerate() {
        let delta = x - mean;
        mean += delta / (k + 1) as f64;
        m2 += delta * (x - mean);
    }
    m2 / (values.len() - 1) as f64
}

/// Noise std estimate from first differences: std(diff) / sqrt(2). Robust to
/// slow trends like the daily cycle.
pub fn estimate_noise_sigma(values: &[f64]) -> f64 {
    if values.len() < 3 {
        return 0.0;
    }
    let diffs: Vec<f64> = values.windows(2).map(|w| w[1] - w[0]).collect();
    let n = diffs.len() as f64;
    let mean = diffs.iter().sum::<f64>() / n;
    let var = diffs.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / (n - 1.0);
    (var / 2.0).sqrt()
}

/// Splits `total` into `k` parts as evenly as possible, earlier parts larger.
fn equal_split(total: usize, k: usize) -> Vec<usize> {
    let base = total / k;
    let rem = total % k;
    (0..k).map(|i| base + usize::from(i < rem)).collect()
}

/// Episode/index placement bookkeeping for one node.
struct Placer {
    occupied: Vec<bool>,
    rng: ChaCha8Rng,
}

impl Placer {
    fn new(samples: usize, seed: u64, node_id: u32) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(u64::from(node_id) + 1);
        Placer {
            occupied: vec![false; samples],
            rng,
        }
    }

    fn fits(&self, start: usize, len: usize, isolation: bool) -> bool {
        let lo = if isolation { start.saturating_sub(1) } else { start };
        let hi = if isolation {
            (start + len + 1).min(self.occupied.len())
        } else {
            start + len
        };
        self.occupied[lo..hi].iter().all(|o| !o)
    }

    fn claim(&mut self, start: usize, len: usize) {
        for o in &mut self.occupied[start..start + len] {
            *o = true;
        }
    }

    /// Seeded placement with rejection sampling, falling back to a
    /// deterministic scan when the node is crowded.
    fn place(&mut self, len: usize, isolation: bool) -> Result<usize> {
        let samples = self.occupied.len();
        if len == 0 || len > samples {
            return Err(Error::Plan(format!(
                "cannot place an episode of {len} samples in a series of {samples}"
            )));
        }
        let max_start = samples - len;
        for _ in 0..200 {
            let start = self.rng.gen_range(0..=max_start);
            if self.fits(start, len, isolation) {
                self.claim(start, len);
                return Ok(start);
            }
        }
        let offset = self.rng.gen_range(0..=max_start);
        for k in 0..=max_start {
            let start = (offset + k) % (max_start + 1);
            if self.fits(start, len, isolation) {
                self.claim(start, len);
                return Ok(start);
            }
        }
        Err(Error::Plan(format!(
            "no room left for a {len}-sample episode; plan demands more faulty samples than available"
        )))
    }
}

/// Episode lengths needed to cover `quota` samples: full episodes of
/// `episode_len` plus one truncated remainder episode.
fn episode_lengths(quota: usize, episode_len: usize) -> Vec<usize> {
    let mut lens = vec![episode_len; quota / episode_len];
    if quota % episode_len > 0 {
        lens.push(quota % episode_len);
    }
    lens
}

/// Injects faults over a clean panel per the plan. The target fault budget
/// (`fault_rate` x total samples) is split equally across the plan's fault
/// types, then equally across the nodes carrying each type; every injected
/// sample is recorded in the returned mask.
pub fn build_dataset(panel: &AlignedPanel, plan: &InjectionPlan) -> Result<(AlignedPanel, FaultMask)> {
    plan.validate()?;
    let samples = panel.grid.len();
    let n_nodes = panel.node_ids.len();
    let mut out = panel.clone();
    let mut mask = FaultMask::all_normal(&panel.node_ids, samples);

    let budget = (plan.fault_rate * (samples * n_nodes) as f64).round() as usize;
    if budget == 0 {
        return Ok((out, mask));
    }

    // Quota per fault type: equal split in taxonomy order across the types
    // the plan actually assigns (the default plan assigns all five).
    let mut types: Vec<FaultClass> = plan.node_to_fault.iter().map(|(_, c)| *c).collect();
    types.sort_unstable();
    types.dedup();
    let type_quotas = equal_split(budget, types.len());

    for (fault, &type_quota) in types.iter().zip(&type_quotas) {
        let mut nodes: Vec<u32> = plan
            .node_to_fault
            .iter()
            .filter(|(_, c)| c == fault)
            .map(|(id, _)| *id)
            .collect();
        nodes.sort_unstable();
        let node_quotas = equal_split(type_quota, nodes.len());
        for (&node_id, &quota) in nodes.iter().zip(&node_quotas) {
            if quota == 0 {
                continue;
            }
            let row = panel
                .node_ids
                .iter()
                .position(|&id| id == node_id)
                .ok_or_else(|| Error::Plan(format!("plan references node {node_id} not in panel")))?;
            if quota > samples {
                return Err(Error::Plan(format!(
                    "node {node_id} needs {quota} faulty samples but has only {samples}"
                )));
            }
            let clean = panel.matrix.row(row).to_vec();
            let mut placer = Placer::new(samples, plan.seed, node_id);
            let mut node_seed_rng = ChaCha8Rng::seed_from_u64(plan.seed ^ u64::from(node_id));
            let injected = match fault {
                FaultClass::Hardover => {
                    let b = match plan.params.hardover_range {
                        Some((lo, hi)) if hi > lo => node_seed_rng.gen_range(lo..hi),
                        Some((lo, _)) => lo,
                        None => plan.params.b_hardover,
                    };
                    let mut ranges = Vec::new();
                    for len in episode_lengths(quota, plan.params.episode_len_persistent) {
                        ranges.push((placer.place(len, false)?, len));
                    }
                    mark(&mut mask.classes[row], &ranges, *fault);
                    inject_hardover(&clean, &ranges, b)?
                }
                FaultClass::Drift => {
                    let mut current = clean.clone();
                    let mut ranges = Vec::new();
                    for len in episode_lengths(quota, plan.params.episode_len_persistent) {
                        let start = placer.place(len, false)?;
                        current = inject_drift(&current, start, len, plan.params.b0_drift)?;
                        ranges.push((start, len));
                    }
                    mark(&mut mask.classes[row], &ranges, *fault);
                    current
                }
                FaultClass::Spike => {
                    let mut indices = Vec::with_capacity(quota);
                    for _ in 0..quota {
                        indices.push(placer.place(1, true)?);
                    }
                    let ranges: Vec<(usize, usize)> = indices.iter().map(|&i| (i, 1)).collect();
                    mark(&mut mask.classes[row], &ranges, *fault);
                    inject_spike(&clean, &indices, plan.params.b_spike)?
                }
                FaultClass::Erratic => {
                    let clean_sigma = estimate_noise_sigma(&clean);
                    let mut ranges = Vec::new();
                    for len in episode_lengths(quota, plan.params.episode_len_erratic) {
                        ranges.push((placer.place(len, false)?, len));
                    }
                    mark(&mut mask.classes[row], &ranges, *fault);
                    inject_erratic(
                        &clean,
                        &ranges,
                        plan.params.erratic_sigma_factor,
                        clean_sigma,
                        node_seed_rng.gen(),
                    )?
                }
                FaultClass::StuckAt => {
                    let mut current = clean.clone();
                    let mut ranges = Vec::new();
                    for len in episode_lengths(quota, plan.params.episode_len_persistent) {
                        let start = placer.place(len, false)?;
                        current = inject_stuck(
                            &current,
                            start,
                            len,
                            plan.params.stuck_mode,
                            node_seed_rng.gen(),
                        )?;
                        ranges.push((start, len));
                    }
                    mark(&mut mask.classes[row], &ranges, *fault);
                    current
                }
                FaultClass::Normal => unreachable!("validated above"),
            };
            out.matrix.row_mut(row).copy_from_slice(&injected);
        }
    }
    Ok((out, mask))
}

fn mark(classes: &mut [FaultClass], ranges: &[(usize, usize)], fault: FaultClass) {
    for &(start, n) in ranges {
        for c in &mut classes[start..start + n] {
            *c = fault;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{generate_synthetic, align, SyntheticConfig};

    #[test]
    fn hardover_shifts_by_b() {
        let values = vec![20.0; 100];
        let out = inject_hardover(&values, &[(10, 10)], 5.0).unwrap();
        assert_eq!(out[15], 25.0);
        let differing = out.iter().zip(&values).filter(|(a, b)| a != b).count();
        assert_eq!(differing, 10);
    }

    #[test]
    fn hardover_zero_bias_is_identity() {
        let values = vec![20.0, 21.0, 19.5];
        let out = inject_hardover(&values, &[(0, 3)], 0.0).unwrap();
        assert_eq!(out, values);
    }

    #[test]
    fn hardover_rejects_overlap() {
        let values = vec![0.0; 50];
        assert!(inject_hardover(&values, &[(0, 10), (5, 10)], 5.0).is_err());
    }

    #[test]
    fn drift_tenth_sample_offset() {
        // Clean 20.0, n = 10, b0 = 0.3 -> 23.0.
        let values = vec![20.0; 64];
        let out = inject_drift(&values, 4, 20, 0.3).unwrap();
        assert!((out[4 + 9] - 23.0).abs() < 1e-12);
        // Sample before onset unchanged.
        assert_eq!(out[3], 20.0);
    }

    #[test]
    fn drift_slope_recovered_by_regression() {
        let values = vec![18.0; 200];
        let out = inject_drift(&values, 50, 50, 0.3).unwrap();
        // Least squares on the injected segment against sample index.
        let seg = &out[50..100];
        let n = seg.len() as f64;
        let xs: Vec<f64> = (0..seg.len()).map(|i| i as f64).collect();
        let mx = xs.iter().sum::<f64>() / n;
        let my = seg.iter().sum::<f64>() / n;
        let slope = xs
            .iter()
            .zip(seg)
            .map(|(x, y)| (x - mx) * (y - my))
            .sum::<f64>()
            / xs.iter().map(|x| (x - mx) * (x - mx)).sum::<f64>();
        assert!((slope - 0.3).abs() < 0.01, "slope {slope}");
    }

    #[test]
    fn drift_rejects_zero_length() {
        assert!(inject_drift(&[1.0; 10], 2, 0, 0.3).is_err());
    }

    #[test]
    fn spike_adds_at_isolated_indices() {
        let values = vec![20.0; 1000];
        let idx = vec![3, 100, 500, 700, 998];
        let out = inject_spike(&values, &idx, 3.0).unwrap();
        assert_eq!(out[3], 23.0);
        let differing = out.iter().zip(&values).filter(|(a, b)| a != b).count();
        assert_eq!(differing, 5);
    }

    #[test]
    fn spike_empty_is_identity() {
        let values = vec![1.0, 2.0, 3.0];
        assert_eq!(inject_spike(&values, &[], 3.0).unwrap(), values);
    }

    #[test]
    fn spike_rejects_adjacent() {
        assert!(inject_spike(&[0.0; 10], &[4, 5], 3.0).is_err());
    }

    #[test]
    fn erratic_rejects_small_factor() {
        assert!(inject_erratic(&[0.0; 10], &[(0, 5)], 1.0, 0.5, 7).is_err());
    }

    #[test]
    fn erratic_empty_ranges_identity() {
        let values = vec![20.0, 21.0];
        assert_eq!(inject_erratic(&values, &[], 2.0, 0.5, 7).unwrap(), values);
    }

    #[test]
    fn erratic_deviation_variance_near_factor_squared() {
        // Deviation from clean over a 500-sample episode has variance
        // ~(factor * sigma)^2; with factor 2 the ratio to sigma^2 is ~4,
        // asserted within +-25%.
        let clean = vec![20.0; 500];
        let sigma = 0.5;
        let out = inject_erratic(&clean, &[(0, 500)], 2.0, sigma, 99).unwrap();
        let dev: Vec<f64> = out.iter().zip(&clean).map(|(a, b)| a - b).collect();
        let mean = dev.iter().sum::<f64>() / dev.len() as f64;
        let var = dev.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / (dev.len() - 1) as f64;
        let ratio = var / (sigma * sigma);
        assert!((3.0..=5.0).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn erratic_noise_mean_near_zero() {
        let n = 10_000;
        let clean = vec![0.0; n];
        let sigma = 0.5;
        let out = inject_erratic(&clean, &[(0, n)], 2.0, sigma, 1234).unwrap();
        let mean = out.iter().sum::<f64>() / n as f64;
        let bound = 3.0 * (2.0 * sigma) / (n as f64).sqrt();
        assert!(mean.abs() < bound, "mean {mean}, bound {bound}");
    }

    #[test]
    fn stuck_freezes_at_last_clean_value() {
        let mut values = vec![20.0; 60];
        values[19] = 21.7;
        let out = inject_stuck(&values, 20, 20, StuckMode::NearestNormal, 0).unwrap();
        assert!(out[20..40].iter().all(|&v| v == 21.7));
        // Episode variance is exactly zero.
        assert_eq!(sample_variance(&out[20..40]), 0.0);
    }

    #[test]
    fn stuck_at_series_start_falls_back_forward() {
        let values = vec![1.0, 2.0, 3.0, 9.0];
        let out = inject_stuck(&values, 0, 3, StuckMode::NearestNormal, 0).unwrap();
        assert_eq!(&out[..3], &[9.0, 9.0, 9.0]);
    }

    #[test]
    fn stuck_whole_series_is_plan_error() {
        assert!(inject_stuck(&[1.0, 2.0], 0, 2, StuckMode::NearestNormal, 0).is_err());
    }

    #[test]
    fn stuck_random_in_range_is_bounded_and_reproducible() {
        let values: Vec<f64> = (0..100).map(|i| 15.0 + (i as f64) * 0.1).collect();
        let a = inject_stuck(&values, 10, 20, StuckMode::RandomInRange, 42).unwrap();
        let b = inject_stuck(&values, 10, 20, StuckMode::RandomInRange, 42).unwrap();
        assert_eq!(a, b);
        let c = a[10];
        assert!(a[10..30].iter().all(|&v| v == c));
        let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert!(c >= lo && c <= hi);
    }

    #[test]
    fn noise_sigma_estimator_recovers_known_sigma() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let normal = Normal::new(0.0, 0.4).unwrap();
        // Slow trend plus noise; the differencing estimator ignores the trend.
        let values: Vec<f64> = (0..5000)
            .map(|i| 20.0 + (i as f64) * 1e-4 + normal.sample(&mut rng))
            .collect();
        let est = estimate_noise_sigma(&values);
        assert!((est - 0.4).abs() < 0.03, "estimate {est}");
    }

    fn small_panel(noise_sigma: f64, seed: u64) -> AlignedPanel {
        let series = generate_synthetic(&SyntheticConfig {
            n_nodes: 6,
            n_days: 30,
            sample_interval_s: 3600,
            base_temp: 20.0,
            daily_amplitude: 4.0,
            noise_sigma,
            seed,
        })
        .unwrap();
        align(&series, 3600).unwrap()
    }

    #[test]
    fn build_dataset_rate_zero_is_identity() {
        let panel = small_panel(0.3, 1);
        let plan = InjectionPlan::one_fault_per_node(
            panel.node_ids.as_slice(),
            0.0,
            FaultParams::defaults_for_window(24),
            9,
        );
        let (out, mask) = build_dataset(&panel, &plan).unwrap();
        assert_eq!(out.matrix, panel.matrix);
        assert_eq!(mask.fault_fraction(), 0.0);
    }

    #[test]
    fn build_dataset_20pct_budget_split() {
        // 6 nodes x 720 samples = 4320; 20% -> 864 faulty; 172-173 per type.
        let panel = small_panel(0.3, 2);
        let plan = InjectionPlan::one_fault_per_node(
            panel.node_ids.as_slice(),
            0.20,
            FaultParams::defaults_for_window(24),
            7,
        );
        let (_, mask) = build_dataset(&panel, &plan).unwrap();
        let mut per_type = std::collections::BTreeMap::new();
        for row in &mask.classes {
            for c in row {
                if *c != FaultClass::Normal {
                    *per_type.entry(*c).or_insert(0usize) += 1;
                }
            }
        }
        let total: usize = per_type.values().sum();
        assert_eq!(total, 864);
        assert_eq!(per_type.len(), 5);
        for (c, n) in &per_type {
            assert!((172..=173).contains(n), "{c}: {n}");
        }
    }

    #[test]
    fn build_dataset_single_fault_type_per_node() {
        let panel = small_panel(0.3, 3);
        let plan = InjectionPlan::one_fault_per_node(
            panel.node_ids.as_slice(),
            0.15,
            FaultParams::defaults_for_window(24),
            11,
        );
        let (_, mask) = build_dataset(&panel, &plan).unwrap();
        for row in 0..mask.node_ids.len() {
            assert!(mask.node_fault_types(row).len() <= 1);
        }
    }

    #[test]
    fn build_dataset_untouched_outside_mask() {
        let panel = small_panel(0.3, 4);
        let plan = InjectionPlan::one_fault_per_node(
            panel.node_ids.as_slice(),
            0.10,
            FaultParams::defaults_for_window(24),
            13,
        );
        let (out, mask) = build_dataset(&panel, &plan).unwrap();
        for row in 0..mask.node_ids.len() {
            for t in 0..panel.grid.len() {
                if mask.classes[row][t] == FaultClass::Normal {
                    assert_eq!(out.matrix.get(row, t), panel.matrix.get(row, t));
                }
            }
        }
    }

    #[test]
    fn build_dataset_deterministic_under_seed() {
        let panel = small_panel(0.3, 5);
        let plan = InjectionPlan::one_fault_per_node(
            panel.node_ids.as_slice(),
            0.20,
            FaultParams::defaults_for_window(24),
            21,
        );
        let (a_panel, a_mask) = build_dataset(&panel, &plan).unwrap();
        let (b_panel, b_mask) = build_dataset(&panel, &plan).unwrap();
        assert_eq!(a_panel.matrix, b_panel.matrix);
        assert_eq!(a_mask, b_mask);
    }

    #[test]
    fn mask_csv_roundtrip() {
        let panel = small_panel(0.3, 6);
        let plan = InjectionPlan::one_fault_per_node(
            panel.node_ids.as_slice(),
            0.05,
            FaultParams::defaults_for_window(24),
            3,
        );
        let (_, mask) = build_dataset(&panel, &plan).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("mask.csv");
        mask.write_csv(&panel.grid, &path).unwrap();
        let back = FaultMask::read_csv(&path).unwrap();
        assert_eq!(back, mask);
    }
}

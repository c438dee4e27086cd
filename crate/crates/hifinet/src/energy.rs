//! First-order radio energy accounting over the cluster topology.
//!
//! A hop from node i to node j charges `l * (eps_elec + eps_da + eps_fs *
//! d_ij^2)` joules for `l` bits: electronics, aggregation, and free-space
//! amplification. Aggregation rounds run once every `t + 1` windows; each
//! round every member node ships its window payload along the energy-optimal
//! path to the cluster head.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inject::FaultClass;
use crate::topology::Topology;

/// Radio constants. Defaults are the standard first-order values:
/// eps_elec 50 nJ/bit, eps_fs 10 pJ/bit/m^2, eps_da 5 nJ/bit, plus a CoAP
/// overhead of 32 bytes per transmission.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct EnergyParams {
    /// Electronics energy, J/bit.
    pub eps_elec: f64,
    /// Free-space amplifier energy, J/bit/m^2.
    pub eps_fs: f64,
    /// Aggregation energy, J/bit.
    pub eps_da: f64,
    /// Multipath amplifier energy, J/bit/m^4. Stored for completeness; the
    /// hop equation uses only the free-space term.
    pub eps_mp: f64,
    /// Per-transmission protocol overhead, bytes.
    pub coap_overhead_bytes: u64,
    /// Wire size of one sample, bytes.
    pub value_bytes: u64,
}

impl Default for EnergyParams {
    fn default() -> Self {
        EnergyParams {
            eps_elec: 50e-9,
            eps_fs: 10e-12,
            eps_da: 5e-9,
            eps_mp: 0.0013e-12,
            coap_overhead_bytes: 32,
            value_bytes: 4,
        }
    }
}

impl EnergyParams {
    pub fn validate(&self) -> Result<()> {
        if self.eps_elec <= 0.0 || self.eps_fs <= 0.0 || self.eps_da <= 0.0 || self.eps_mp <= 0.0 {
            return Err(Error::Config("energy constants must be positive".into()));
        }
        if self.value_bytes == 0 {
            return Err(Error::Config("value_bytes must be positive".into()));
        }
        Ok(())
    }
}

/// One recorded transmission.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Transmission {
    pub src: u32,
    pub dst: u32,
    pub bits: u64,
    pub joules: f64,
}

/// Per-link records plus the running total.
#[derive(Debug, Clone, Default)]
pub struct EnergyLedger {
    pub records: Vec<Transmission>,
    total: f64,
}

impl EnergyLedger {
    pub fn new() -> Self {
        EnergyLedger::default()
    }

    pub fn record(&mut self, src: u32, dst: u32, bits: u64, joules: f64) {
        self.records.push(Transmission {
            src,
            dst,
            bits,
            joules,
        });
        self.total += joules;
    }

    pub fn total_joules(&self) -> f64 {
        self.total
    }

    /// Energy efficiency: the reciprocal of total energy spent.
    pub fn energy_efficiency(&self) -> f64 {
        1.0 / self.total
    }
}

/// Energy to move `l_bits` over one hop of `d_m` meters.
pub fn link_energy(l_bits: u64, d_m: f64, params: &EnergyParams) -> Result<f64> {
    if l_bits == 0 {
        return Err(Error::Energy("transmission of zero bits".into()));
    }
    if d_m < 0.0 || !d_m.is_finite() {
        return Err(Error::Energy(format!("invalid hop distance {d_m} m")));
    }
    Ok(l_bits as f64 * (params.eps_elec + params.eps_da + params.eps_fs * d_m * d_m))
}

/// Bits on the wire for a window of `w_samples` values plus protocol
/// overhead: `(w * value_bytes + overhead) * 8`.
pub fn payload_bits(w_samples: usize, params: &EnergyParams) -> u64 {
    (w_samples as u64 * params.value_bytes + params.coap_overhead_bytes) * 8
}

#[derive(Clone, PartialEq)]
struct QueueEntry {
    cost: f64,
    path: Vec<usize>,
}

impl Eq for QueueEntry {}

impl Ord for QueueEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        // Min-heap on cost, then lexicographically smaller path first.
        other
            .cost
            .partial_cmp(&self.cost)
            .unwrap_or(Ordering::Equal)
            .then_with(|| other.path.cmp(&self.path))
    }
}

impl PartialOrd for QueueEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Minimum-energy path from `src` to `dst`, edge cost = one bit over the
/// hop. Ties break toward the lexicographically smaller node-id sequence.
pub fn shortest_path(topology: &Topology, src: u32, dst: u32, params: &EnergyParams) -> Result<Vec<u32>> {
    let s = topology.index_of(src)?;
    let d = topology.index_of(dst)?;
    if s == d {
        return Ok(vec![src]);
    }
    let n = topology.len();
    let mut best: Vec<Option<QueueEntry>> = vec![None; n];
    let mut heap = BinaryHeap::new();
    heap.push(QueueEntry {
        cost: 0.0,
        path: vec![s],
    });
    while let Some(entry) = heap.pop() {
        let at = *entry.path.last().expect("non-empty path");
        if let Some(b) = &best[at] {
            if b.cost < entry.cost || (b.cost == entry.cost && b.path <= entry.path) {
                continue;
            }
        }
        best[at] = Some(entry.clone());
        if at == d {
            continue;
        }
        for j in topology.neighbors(at) {
            let hop = link_energy(1, topology.distance(at, j), params)?;
            let mut path = entry.path.clone();
            path.push(j);
            let cand = QueueEntry {
                cost: entry.cost + hop,
                path,
            };
            let better = match &best[j] {
                None => true,
                Some(b) => cand.cost < b.cost || (cand.cost == b.cost && cand.path < b.path),
            };
            if better {
                heap.push(cand);
            }
        }
    }
    match &best[d] {
        Some(entry) => Ok(entry
            .path
            .iter()
            .map(|&i| topology.node_ids()[i])
            .collect()),
        None => Err(Error::Routing(format!(
            "no path from node {src} to node {dst}"
        ))),
    }
}

/// Number of aggregation rounds for `n_windows` at time delay `t`: rounds
/// fire at windows 0, t+1, 2(t+1), ...
pub fn round_count(n_windows: usize, time_delay_t: usize) -> usize {
    n_windows.div_ceil(time_delay_t + 1)
}

/// Window indices at which aggregation rounds fire.
pub fn round_windows(n_windows: usize, time_delay_t: usize) -> Vec<usize> {
    (0..n_windows).step_by(time_delay_t + 1).collect()
}

/// Energy for one aggregation round: every member node sends its window
/// payload along its shortest path to the cluster head.
pub fn per_round_energy(
    topology: &Topology,
    w_samples: usize,
    params: &EnergyParams,
) -> Result<f64> {
    let bits = payload_bits(w_samples, params);
    let head = topology.cluster_head();
    let mut total = 0.0;
    for &node in topology.node_ids() {
        if node == head {
            continue;
        }
        let path = shortest_path(topology, node, head, params)?;
        for hop in path.windows(2) {
            let (a, b) = (topology.index_of(hop[0])?, topology.index_of(hop[1])?);
            total += link_energy(bits, topology.distance(a, b), params)?;
        }
    }
    Ok(total)
}

/// Runs the aggregation schedule over `n_windows` windows and returns the
/// full transmission ledger. The total accumulates round by round; every
/// round costs the identical per-round subtotal, so the total is exactly the
/// repeated sum of [`per_round_energy`].
pub fn schedule_energy(
    topology: &Topology,
    n_windows: usize,
    time_delay_t: usize,
    w_samples: usize,
    params: &EnergyParams,
) -> Result<EnergyLedger> {
    let bits = payload_bits(w_samples, params);
    let head = topology.cluster_head();
    let mut records = Vec::new();
    let mut total = 0.0;
    for _round in round_windows(n_windows, time_delay_t) {
        let mut subtotal = 0.0;
        for &node in topology.node_ids() {
            if node == head {
                continue;
            }
            let path = shortest_path(topology, node, head, params)?;
            for hop in path.windows(2) {
                let (a, b) = (topology.index_of(hop[0])?, topology.index_of(hop[1])?);
                let joules = link_energy(bits, topology.distance(a, b), params)?;
                records.push(Transmission {
                    src: hop[0],
                    dst: hop[1],
                    bits,
                    joules,
                });
                subtotal += joules;
            }
        }
        total += subtotal;
    }
    Ok(EnergyLedger { records, total })
}

/// One row of the accuracy/energy tradeoff table.
#[derive(Debug, Clone, Serialize)]
pub struct TradeoffRow {
    pub t: usize,
    pub rounds: usize,
    pub e_total_j: f64,
    pub ee: f64,
    pub acc_edge: f64,
    pub acc_combined: f64,
    pub accuracy_delta_pct: f64,
}

/// Per-window predictions for the tradeoff study: row w holds the labels of
/// every topology node at window w.
pub type WindowPredictions = Vec<Vec<FaultClass>>;

/// Evaluates the accuracy/energy tradeoff across time delays. At delay `t`
/// the network predictions apply at aggregation-round windows and edge-only
/// predictions in between; energy comes from the same schedule.
pub fn tradeoff_table(
    true_labels: &WindowPredictions,
    edge_preds: &WindowPredictions,
    net_preds: &WindowPredictions,
    topology: &Topology,
    w_samples: usize,
    t_values: &[usize],
    params: &EnergyParams,
) -> Result<Vec<TradeoffRow>> {
    let n_windows = true_labels.len();
    if edge_preds.len() != n_windows || net_preds.len() != n_windows {
        return Err(Error::Metrics(
            "tradeoff inputs must cover the same windows".into(),
        ));
    }
    let n_labels: usize = true_labels.iter().map(|r| r.len()).sum();
    if n_labels == 0 {
        return Err(Error::Metrics("tradeoff called with no labels".into()));
    }
    let acc_of = |pred: &WindowPredictions| -> f64 {
        let correct: usize = true_labels
            .iter()
            .zip(pred)
            .map(|(t_row, p_row)| t_row.iter().zip(p_row).filter(|(a, b)| a == b).count())
            .sum();
        correct as f64 / n_labels as f64
    };

    let acc_edge = acc_of(edge_preds);
    let mut rows = Vec::with_capacity(t_values.len());
    for &t in t_values {
        let round_set: std::collections::BTreeSet<usize> =
            round_windows(n_windows, t).into_iter().collect();
        let combined: WindowPredictions = (0..n_windows)
            .map(|w| {
                if round_set.contains(&w) {
                    net_preds[w].clone()
                } else {
                    edge_preds[w].clone()
                }
            })
            .collect();
        let acc_combined = acc_of(&combined);
        let ledger = schedule_energy(topology, n_windows, t, w_samples, params)?;
        rows.push(TradeoffRow {
            t,
            rounds: round_count(n_windows, t),
            e_total_j: ledger.total_joules(),
            ee: ledger.energy_efficiency(),
            acc_edge,
            acc_combined,
            accuracy_delta_pct: (acc_combined - acc_edge) * 100.0,
        });
    }
    Ok(rows)
}

pub fn write_tradeoff_csv(rows: &[TradeoffRow], path: &Path) -> Result<()> {
    let mut out = String::from("t,rounds,E_total_J,EE,acc_edge,acc_combined,accuracy_delta_pct\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{:.12e},{:.12e},{:.6},{:.6},{:.4}\n",
            r.t, r.rounds, r.e_total_j, r.ee, r.acc_edge, r.acc_combined, r.accuracy_delta_pct
        ));
    }
    std::fs::write(path, out).map_err(|e| Error::io(path.display().to_string(), e))
}

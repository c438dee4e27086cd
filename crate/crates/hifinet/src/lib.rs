//! Two-stage fault diagnosis for wireless sensor networks.
//!
//! Stage 1 runs an LSTM stacked-autoencoder classifier per node over sliding
//! windows of its readings. Stage 2 refines those per-node verdicts with an
//! iterative confidence-modulated graph attention network over the cluster
//! topology. Around the two stages sit the tooling a study needs: dataset
//! ingestion and synthesis, injection of the five classic sensor faults
//! (hardover, drift, spike, erratic, stuck-at), a first-order radio energy
//! model with a tunable aggregation schedule, and a metrics/report harness.
//!
//! Start from the runnable programs in `examples/`, or drive everything from
//! a single config file through the `hifinet` binary.

pub mod config;
pub mod edge;
pub mod energy;
pub mod error;
pub mod eval;
pub mod ign;
pub mod ingest;
pub mod inject;
pub mod nn;
pub mod pipeline;
pub mod topology;

pub use error::{Error, Result};

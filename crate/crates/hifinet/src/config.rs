//! Experiment configuration: one TOML file drives the whole pipeline.
//! Every scalar can be overridden on the command line with repeated
//! `--set key.path=value` flags, applied to the parsed TOML before
//! deserialization.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::edge::EdgeConfig;
use crate::energy::EnergyParams;
use crate::error::{Error, Result};
use crate::ign::IgnConfig;
use crate::ingest::SyntheticConfig;
use crate::inject::FaultParams;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    Synthetic,
    Intel,
    Csv,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct DataConfig {
    pub source: DataSource,
    /// Shared grid spacing for alignment, seconds.
    pub grid_interval_s: i64,
    /// Intel Lab flat file (source = intel).
    pub intel_path: Option<PathBuf>,
    /// Per-node CSV files as (node id, path) pairs (source = csv).
    pub csv_paths: Option<Vec<(u32, PathBuf)>>,
    /// Node selection; defaults to the first six ids present.
    pub node_ids: Option<Vec<u32>>,
    /// Inclusive epoch-second range filter.
    pub time_range: Option<(i64, i64)>,
    pub synthetic: SyntheticParams,
}

/// Synthetic generator parameters minus the seed (the global seed is used).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticParams {
    pub n_nodes: usize,
    pub n_days: usize,
    pub sample_interval_s: i64,
    pub base_temp: f64,
    pub daily_amplitude: f64,
    pub noise_sigma: f64,
}

impl Default for SyntheticParams {
    fn default() -> Self {
        SyntheticParams {
            n_nodes: 6,
            n_days: 30,
            sample_interval_s: 3600,
            base_temp: 20.0,
            daily_amplitude: 4.0,
            noise_sigma: 0.5,
        }
    }
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            source: DataSource::Synthetic,
            grid_interval_s: 3600,
            intel_path: None,
            csv_paths: None,
            node_ids: None,
            time_range: None,
            synthetic: SyntheticParams::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct WindowConfig {
    pub w: usize,
    pub stride: usize,
}

impl Default for WindowConfig {
    fn default() -> Self {
        WindowConfig { w: 24, stride: 1 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct InjectionConfig {
    /// Overall faulty-sample fractions; one dataset is built per rate.
    pub rates: Vec<f64>,
    /// Fault parameters; episode lengths default to 2w / w when omitted.
    pub params: Option<FaultParams>,
}

impl Default for InjectionConfig {
    fn default() -> Self {
        InjectionConfig {
            rates: vec![0.05, 0.10, 0.15, 0.20],
            params: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitConfig {
    /// Fraction of window start positions used for training; the rest are
    /// the test set. Validation is carved from the training side by the
    /// stage trainers.
    pub train_fraction: f64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            train_fraction: 0.7,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct TradeoffConfig {
    pub t_values: Vec<usize>,
}

impl Default for TradeoffConfig {
    fn default() -> Self {
        TradeoffConfig {
            t_values: (0..10).collect(),
        }
    }
}

/// The complete experiment description.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    pub topology_file: Option<PathBuf>,
    /// Cluster-head chain spacing used when no topology file is given.
    pub default_topology_spacing_m: f64,
    pub data: DataConfig,
    pub windows: WindowConfig,
    pub injection: InjectionConfig,
    pub split: SplitConfig,
    pub edge: EdgeConfig,
    pub ign: IgnConfig,
    pub energy: EnergyParams,
    pub tradeoff: TradeoffConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 42,
            output_dir: PathBuf::from("runs/experiment"),
            topology_file: None,
            default_topology_spacing_m: 50.0,
            data: DataConfig::default(),
            windows: WindowConfig::default(),
            injection: InjectionConfig::default(),
            split: SplitConfig::default(),
            edge: EdgeConfig::default(),
            ign: IgnConfig::default(),
            energy: EnergyParams::default(),
            tradeoff: TradeoffConfig::default(),
        }
    }
}

impl ExperimentConfig {
    /// Loads a TOML config, applies `--set` overrides, resolves paths
    /// against `workdir`, and validates.
    pub fn load(path: &Path, overrides: &[String], workdir: &Path) -> Result<Self> {
        let text =
            fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        let mut value: toml::Value = text
            .parse()
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        for spec in overrides {
            apply_override(&mut value, spec)?;
        }
        let mut config: ExperimentConfig = value
            .try_into()
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        config.resolve_paths(workdir);
        config.validate()?;
        Ok(config)
    }

    fn resolve_paths(&mut self, workdir: &Path) {
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = workdir.join(&p);
            }
        };
        resolve(&mut self.output_dir);
        if let Some(p) = &mut self.topology_file {
            resolve(p);
        }
        if let Some(p) = &mut self.data.intel_path {
            resolve(p);
        }
        if let Some(paths) = &mut self.data.csv_paths {
            for (_, p) in paths {
                resolve(p);
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.windows.w == 0 {
            return Err(Error::Config("windows.w must be positive".into()));
        }
        if self.windows.stride == 0 {
            return Err(Error::Config("windows.stride must be positive".into()));
        }
        if self.injection.rates.is_empty() {
            return Err(Error::Config("injection.rates must not be empty".into()));
        }
        for rate in &self.injection.rates {
            if !(0.0..1.0).contains(rate) {
                return Err(Error::Config(format!("fault rate {rate} outside [0, 1)")));
            }
        }
        if !(0.0..1.0).contains(&self.split.train_fraction) || self.split.train_fraction <= 0.0 {
            return Err(Error::Config("split.train_fraction must be in (0, 1)".into()));
        }
        self.energy.validate()?;
        match self.data.source {
            DataSource::Intel => {
                let path = self.data.intel_path.as_ref().ok_or_else(|| {
                    Error::Config("data.intel_path required for source = intel".into())
                })?;
                if !path.exists() {
                    return Err(Error::Config(format!(
                        "data.intel_path {} does not exist",
                        path.display()
                    )));
                }
            }
            DataSource::Csv => {
                let paths = self.data.csv_paths.as_ref().ok_or_else(|| {
                    Error::Config("data.csv_paths required for source = csv".into())
                })?;
                if paths.is_empty() {
                    return Err(Error::Config("data.csv_paths is empty".into()));
                }
                for (_, p) in paths {
                    if !p.exists() {
                        return Err(Error::Config(format!("{} does not exist", p.display())));
                    }
                }
            }
            DataSource::Synthetic => {}
        }
        if let Some(p) = &self.topology_file {
            if !p.exists() {
                return Err(Error::Config(format!(
                    "topology_file {} does not exist",
                    p.display()
                )));
            }
        }
        Ok(())
    }

    /// Fault parameters with episode lengths defaulted from the window.
    pub fn fault_params(&self) -> FaultParams {
        self.injection
            .params
            .clone()
            .unwrap_or_else(|| FaultParams::defaults_for_window(self.windows.w))
    }

    /// Synthetic generator config carrying the global seed.
    pub fn synthetic_config(&self) -> SyntheticConfig {
        let s = &self.data.synthetic;
        SyntheticConfig {
            n_nodes: s.n_nodes,
            n_days: s.n_days,
            sample_interval_s: s.sample_interval_s,
            base_temp: s.base_temp,
            daily_amplitude: s.daily_amplitude,
            noise_sigma: s.noise_sigma,
            seed: self.seed,
        }
    }

    /// Stage configs inherit the global seed.
    pub fn edge_config(&self) -> EdgeConfig {
        EdgeConfig {
            window: self.windows.w,
            seed: self.seed,
            ..self.edge.clone()
        }
    }

    pub fn ign_config(&self) -> IgnConfig {
        IgnConfig {
            seed: self.seed,
            ..self.ign.clone()
        }
    }

    /// Hash of the fully resolved config; identical configs hash identically
    /// regardless of the TOML formatting they came from.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        let mut hasher = Sha256::new();
        hasher.update(canonical.as_bytes());
        hex_string(&hasher.finalize())
    }
}

fn hex_string(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Applies one `key.path=value` override onto a TOML tree. The value is
/// parsed as TOML, so strings need quotes only when ambiguous.
fn apply_override(root: &mut toml::Value, spec: &str) -> Result<()> {
    let (path, raw_value) = spec
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override '{spec}' is not key=value")))?;
    // Parse the right-hand side as a TOML value; bare words fall back to
    // strings so `--set data.source=intel` works unquoted.
    let parsed: toml::Value = match format!("value = {raw_value}").parse::<toml::Value>() {
        Ok(doc) => doc
            .as_table()
            .and_then(|t| t.get("value"))
            .cloned()
            .unwrap_or_else(|| toml::Value::String(raw_value.to_string())),
        Err(_) => toml::Value::String(raw_value.to_string()),
    };
    let mut cursor = root;
    let segments: Vec<&str> = path.split('.').collect();
    for (i, segment) in segments.iter().enumerate() {
        let table = cursor
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override '{path}': '{segment}' is not a table")))?;
        if i + 1 == segments.len() {
            table.insert(segment.to_string(), parsed);
            return Ok(());
        }
        cursor = table
            .entry(segment.to_string())
            .or_insert(toml::Value::Table(Default::default()));
    }
    unreachable!("loop returns on the last segment")
}

/// Formats a rate as a directory name: 0.05 -> rate_5, 0.125 -> rate_12.5.
pub fn rate_dir_name(rate: f64) -> String {
    let pct = rate * 100.0;
    if (pct - pct.round()).abs() < 1e-9 {
        format!("rate_{}", pct.round() as i64)
    } else {
        format!("rate_{pct}")
    }
}

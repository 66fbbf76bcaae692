use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::payoff::PayoffSpec;
use crate::error::{Error, Result};
use crate::features::{ActivationKind, InitSpec};
use crate::models::{Measure, ModelSpec, PathBatch, TimeGrid};
use crate::oracle::QuadratureSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Seeds {
    pub paths: u64,
    pub features: u64,
    /// Used by presets that draw model parameters.
    #[serde(default)]
    pub model_params: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleSettings {
    #[serde(default)]
    pub quad: QuadratureSpec,
    #[serde(default = "default_ode_steps")]
    pub ode_steps: usize,
    /// Reference hedges are evaluated on every `thin`-th grid node.
    #[serde(default = "default_thin")]
    pub thin: usize,
}

fn default_ode_steps() -> usize {
    100
}

fn default_thin() -> usize {
    5
}

fn default_train_fraction() -> f64 {
    0.8
}

fn default_true() -> bool {
    true
}

fn default_hedge_samples() -> usize {
    4
}

impl Default for OracleSettings {
    fn default() -> Self {
        OracleSettings {
            quad: QuadratureSpec::default(),
            ode_steps: default_ode_steps(),
            thin: default_thin(),
        }
    }
}

/// Input of the `simulate` command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub model: ModelSpec,
    pub grid: TimeGrid,
    pub n_paths: usize,
    pub seed: u64,
    #[serde(default)]
    pub measure: Measure,
}

/// Sidecar of a path file: what the binary format does not carry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathFileMeta {
    pub horizon: f64,
    pub steps: usize,
    pub n_paths: usize,
    pub dim: usize,
    pub seed: u64,
    pub measure: Measure,
}

pub const PATHS_FILE: &str = "paths.chpb";
pub const PATHS_META_FILE: &str = "paths.json";

impl SimulationConfig {
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let config: SimulationConfig = serde_json::from_str(&text)?;
        TimeGrid::new(config.grid.horizon, config.grid.steps)?;
        if config.n_paths == 0 {
            return Err(Error::Config("n_paths must be positive".into()));
        }
        Ok(config)
    }
}

/// Writes `paths.chpb` and its `paths.json` sidecar into `dir`.
pub fn write_path_files(paths: &PathBatch, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let bin = dir.join(PATHS_FILE);
    let file = std::fs::File::create(&bin).map_err(|e| Error::io(&bin, e))?;
    paths.write_binary(std::io::BufWriter::new(file))?;
    let meta = PathFileMeta {
        horizon: paths.grid.horizon,
        steps: paths.grid.steps,
        n_paths: paths.n_paths(),
        dim: paths.dim(),
        seed: paths.seed,
        measure: paths.measure,
    };
    let json = dir.join(PATHS_META_FILE);
    let file = std::fs::File::create(&json).map_err(|e| Error::io(&json, e))?;
    serde_json::to_writer_pretty(file, &meta)?;
    Ok(vec![bin, json])
}

/// One experiment: data generation, features, fit and evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub model: ModelSpec,
    pub payoff: PayoffSpec,
    pub grid: TimeGrid,
    pub n_paths: usize,
    #[serde(default = "default_train_fraction")]
    pub train_fraction: f64,
    /// Chaos orders `N` to fit, ascending.
    pub orders: Vec<usize>,
    /// Neurons per chaos order.
    pub m_n: usize,
    #[serde(default)]
    pub activation: ActivationKind,
    #[serde(default)]
    pub init: InitSpec,
    pub seeds: Seeds,
    /// `null` selects the scale-aware default.
    #[serde(default)]
    pub ridge_lambda: Option<f64>,
    #[serde(default)]
    pub oracle: OracleSettings,
    /// Reuse one bank across orders (column-prefix nesting). When false,
    /// every order gets a freshly seeded bank.
    #[serde(default = "default_true")]
    pub nested_bank: bool,
    /// Number of test paths written to `hedge_paths.csv`.
    #[serde(default = "default_hedge_samples")]
    pub hedge_sample_paths: usize,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let config: ExperimentConfig = serde_json::from_str(&text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        TimeGrid::new(self.grid.horizon, self.grid.steps)?;
        self.payoff.validate(self.model.dim())?;
        if self.n_paths < 2 {
            return Err(Error::Config("need at least two paths".into()));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::Config(format!("train_fraction must lie in (0, 1), got {}", self.train_fraction)));
        }
        let (train, test) = self.split_sizes();
        if train == 0 || test == 0 {
            return Err(Error::Config(format!("split leaves {train} training and {test} test paths")));
        }
        if self.orders.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("orders must be strictly ascending".into()));
        }
        if self.orders.last().is_some_and(|n| *n > crate::hermite::MAX_ORDER) {
            return Err(Error::Config("chaos order too large".into()));
        }
        if self.m_n == 0 && self.max_order() > 0 {
            return Err(Error::Config("m_n must be positive".into()));
        }
        if let Some(l) = self.ridge_lambda {
            if !(l >= 0.0 && l.is_finite()) {
                return Err(Error::Config(format!("ridge_lambda must be finite and >= 0, got {l}")));
            }
        }
        if self.oracle.thin == 0 || self.oracle.ode_steps == 0 {
            return Err(Error::Config("oracle thin and ode_steps must be positive".into()));
        }
        self.oracle.quad.validate()?;
        Ok(())
    }

    pub fn max_order(&self) -> usize {
        self.orders.last().copied().unwrap_or(0)
    }

    /// First `⌈f·M⌉` paths train, the rest test.
    pub fn split_sizes(&self) -> (usize, usize) {
        let train = ((self.train_fraction * self.n_paths as f64).ceil() as usize).min(self.n_paths);
        (train, self.n_paths - train)
    }

    pub fn n_params(&self, order: usize) -> usize {
        1 + order * self.m_n
    }
}

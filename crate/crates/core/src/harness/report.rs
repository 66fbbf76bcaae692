use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, Seeds};
use crate::error::{Error, Result};

/// Metrics of one chaos order. Means are per path; the `*_sse` and
/// `imse_sum` fields hold the corresponding unnormalised sums.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderReport {
    #[serde(rename = "N")]
    pub order: usize,
    pub n_params: usize,
    pub train_mse: f64,
    pub test_mse: f64,
    pub imse_test: Option<f64>,
    /// Wall clock of regressors, fit, prediction and hedge for this order.
    pub runtime_seconds: f64,
    pub train_sse: f64,
    pub test_sse: f64,
    pub imse_sum: Option<f64>,
    pub ridge_lambda: f64,
    pub condition_estimate: f64,
    pub effective_rank: usize,
    /// RMS over test paths of `w_0 + Σ θᵀΔX − G^φ`.
    pub replication_gap_rms: f64,
    pub replication_gap_max_abs: f64,
    /// The RMS gap relative to the standard deviation of `G^φ`; absent when
    /// `G^φ` is constant.
    pub replication_gap_ratio: Option<f64>,
    pub weights: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub version: String,
    pub config: ExperimentConfig,
    pub seeds: Seeds,
    pub n_train: usize,
    pub n_test: usize,
    pub oracle_available: bool,
    /// Reference hedges are compared on every `oracle_thin`-th node.
    pub oracle_thin: usize,
    pub hedge_time_nodes: usize,
    pub test_payoff_mean: f64,
    pub test_payoff_variance: f64,
    pub orders: Vec<OrderReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScatterRow {
    #[serde(rename = "N")]
    pub order: usize,
    pub path_id: usize,
    pub true_payoff: f64,
    pub predicted_payoff: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HedgeRow {
    pub path_id: usize,
    pub t: f64,
    pub asset: usize,
    pub theta_hat: f64,
    /// Empty when no oracle is available.
    pub theta_ref: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutput {
    pub report: FitReport,
    pub scatter: Vec<ScatterRow>,
    /// Hedges of the sampled test paths at the highest order.
    pub hedge_rows: Vec<HedgeRow>,
}

pub const REPORT_FILE: &str = "report.json";
pub const LEARNING_CURVE_FILE: &str = "learning_curve.csv";
pub const SCATTER_FILE: &str = "payoff_scatter.csv";
pub const HEDGE_FILE: &str = "hedge_paths.csv";

pub const LEARNING_CURVE_HEADER: [&str; 9] = [
    "N",
    "n_params",
    "train_mse",
    "test_mse",
    "imse_test",
    "runtime_seconds",
    "train_sse",
    "test_sse",
    "imse_sum",
];
pub const SCATTER_HEADER: [&str; 4] = ["N", "path_id", "true_payoff", "predicted_payoff"];
pub const HEDGE_HEADER: [&str; 5] = ["path_id", "t", "asset", "theta_hat", "theta_ref"];

fn csv_writer(path: &Path, header: &[&str]) -> Result<csv::Writer<BufWriter<File>>> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(BufWriter::new(file));
    w.write_record(header)?;
    Ok(w)
}

fn finish(mut w: csv::Writer<BufWriter<File>>, path: &Path) -> Result<()> {
    w.flush().map_err(|e| Error::io(path, e))
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Writes `report.json`, `learning_curve.csv`, `payoff_scatter.csv` and
/// `hedge_paths.csv` into `dir` (created if missing). Returns the paths.
pub fn emit_results(output: &ExperimentOutput, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    let report_path = dir.join(REPORT_FILE);
    let file = File::create(&report_path).map_err(|e| Error::io(&report_path, e))?;
    serde_json::to_writer_pretty(BufWriter::new(file), &output.report)?;

    let curve_path = dir.join(LEARNING_CURVE_FILE);
    let mut w = csv_writer(&curve_path, &LEARNING_CURVE_HEADER)?;
    for o in &output.report.orders {
        w.write_record([
            o.order.to_string(),
            o.n_params.to_string(),
            o.train_mse.to_string(),
            o.test_mse.to_string(),
            opt(o.imse_test),
            o.runtime_seconds.to_string(),
            o.train_sse.to_string(),
            o.test_sse.to_string(),
            opt(o.imse_sum),
        ])?;
    }
    finish(w, &curve_path)?;

    let scatter_path = dir.join(SCATTER_FILE);
    let mut w = csv_writer(&scatter_path, &SCATTER_HEADER)?;
    for r in &output.scatter {
        w.serialize(r)?;
    }
    finish(w, &scatter_path)?;

    let hedge_path = dir.join(HEDGE_FILE);
    let mut w = csv_writer(&hedge_path, &HEDGE_HEADER)?;
    for r in &output.hedge_rows {
        w.serialize(r)?;
    }
    finish(w, &hedge_path)?;

    Ok(vec![report_path, curve_path, scatter_path, hedge_path])
}

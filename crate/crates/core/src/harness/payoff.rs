use ndarray::{ArrayView2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{PathBatch, TimeGrid};
use crate::oracle::PathPayoff;

/// Payoffs of the experiments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PayoffSpec {
    /// `max(X_T − K, 0)` on the first coordinate.
    EuropeanCall { strike: f64 },
    /// `max(K − (1/T) Σ_{k<K} X_{t_k} Δt, 0)` on the first coordinate.
    AsianPut { strike: f64 },
    /// `max(K − wᵀX_T, 0)`.
    BasketPut { strike: f64, weights: Vec<f64> },
}

impl PayoffSpec {
    pub fn validate(&self, dim: usize) -> Result<()> {
        let strike = match self {
            PayoffSpec::EuropeanCall { strike } | PayoffSpec::AsianPut { strike } => {
                if dim != 1 {
                    return Err(Error::Config(format!("this payoff needs a one-dimensional model, got d={dim}")));
                }
                strike
            }
            PayoffSpec::BasketPut { strike, weights } => {
                if weights.len() != dim {
                    return Err(Error::Config(format!(
                        "basket weights have length {} but the model has dimension {dim}",
                        weights.len()
                    )));
                }
                if weights.iter().any(|w| !w.is_finite()) {
                    return Err(Error::Config("basket weights must be finite".into()));
                }
                strike
            }
        };
        if !strike.is_finite() {
            return Err(Error::Config("strike must be finite".into()));
        }
        Ok(())
    }

    pub fn strike(&self) -> f64 {
        match self {
            PayoffSpec::EuropeanCall { strike } | PayoffSpec::AsianPut { strike } | PayoffSpec::BasketPut { strike, .. } => *strike,
        }
    }
}

/// `(1/T) Σ_{j<k} X_{t_j} Δt` on the first coordinate.
pub fn running_average(path: ArrayView2<f64>, grid: &TimeGrid, k: usize) -> f64 {
    let dt = grid.dt();
    (0..k).map(|j| path[[j, 0]]).sum::<f64>() * dt / grid.horizon
}

impl PathPayoff for PayoffSpec {
    fn value(&self, path: ArrayView2<f64>, grid: &TimeGrid) -> f64 {
        let last = path.row(grid.steps);
        match self {
            PayoffSpec::EuropeanCall { strike } => (last[0] - strike).max(0.0),
            PayoffSpec::AsianPut { strike } => (strike - running_average(path, grid, grid.steps)).max(0.0),
            PayoffSpec::BasketPut { strike, weights } => {
                (strike - weights.iter().zip(last.iter()).map(|(w, x)| w * x).sum::<f64>()).max(0.0)
            }
        }
    }
}

/// Payoff of every path in the batch.
pub fn evaluate_payoff(payoff: &PayoffSpec, paths: &PathBatch) -> Result<Vec<f64>> {
    payoff.validate(paths.dim()).map_err(|e| match e {
        Error::Config(m) => Error::contract(m),
        other => other,
    })?;
    Ok(paths
        .states
        .axis_iter(Axis(0))
        .into_par_iter()
        .map(|p| payoff.value(p, &paths.grid))
        .collect())
}

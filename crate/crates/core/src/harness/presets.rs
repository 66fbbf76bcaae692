//! Built-in experiment configurations.
//!
//! Full scale matches the published experiments; desk scale shrinks the path
//! count and grid so a run finishes in minutes on one core.

use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, OracleSettings, Seeds};
use super::payoff::PayoffSpec;
use crate::error::Result;
use crate::features::{ActivationKind, InitSpec};
use crate::models::{AffineParams, ModelSpec, TimeGrid};
use crate::oracle::QuadratureSpec;

pub const DEFAULT_SEED: u64 = 20_240_601;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    Bm,
    Cev,
    Affine,
}

impl Preset {
    pub fn name(self) -> &'static str {
        match self {
            Preset::Bm => "bm",
            Preset::Cev => "cev",
            Preset::Affine => "affine",
        }
    }
}

/// Seeds for paths, neurons and model parameters derived from one value.
pub fn seeds_from(seed: u64) -> Seeds {
    Seeds {
        paths: seed,
        features: seed.wrapping_add(1),
        model_params: seed.wrapping_add(2),
    }
}

/// Alternating basket weights `1, −0.95, 0.9, −0.85, …`.
pub fn basket_weights(d: usize) -> Vec<f64> {
    (0..d)
        .map(|i| {
            let mag = 1.0 - 0.05 * i as f64;
            if i % 2 == 0 {
                mag
            } else {
                -mag
            }
        })
        .collect()
}

fn base(model: ModelSpec, payoff: PayoffSpec, steps: usize, n_paths: usize, m_n: usize, seed: u64) -> Result<ExperimentConfig> {
    Ok(ExperimentConfig {
        model,
        payoff,
        grid: TimeGrid::new(1.0, steps)?,
        n_paths,
        train_fraction: 0.8,
        orders: (0..=6).collect(),
        m_n,
        activation: ActivationKind::Sigmoid,
        init: InitSpec::default(),
        seeds: seeds_from(seed),
        ridge_lambda: None,
        oracle: OracleSettings::default(),
        nested_bank: true,
        hedge_sample_paths: 4,
        output_dir: None,
    })
}

/// European call on Brownian motion started at 0 with strike −0.5.
pub fn bm(desk: bool, seed: u64) -> Result<ExperimentConfig> {
    let (m, k) = if desk { (20_000, 250) } else { (100_000, 500) };
    base(ModelSpec::brownian(vec![0.0])?, PayoffSpec::EuropeanCall { strike: -0.5 }, k, m, 50, seed)
}

/// Asian put with strike 102 on a CEV process from 100 with drift −0.02 and
/// volatility 0.4.
pub fn cev(desk: bool, seed: u64) -> Result<ExperimentConfig> {
    let (m, k) = if desk { (20_000, 250) } else { (100_000, 500) };
    base(ModelSpec::cev(100.0, -0.02, 0.4)?, PayoffSpec::AsianPut { strike: 102.0 }, k, m, 50, seed)
}

/// Basket put on a random affine model started at `(10, …, 10)`. Full scale
/// uses d = 10 with strike 4; desk scale uses d = 2 with the strike one
/// terminal standard deviation (frozen at `x₀`) above `wᵀx₀`.
pub fn affine(desk: bool, seed: u64) -> Result<ExperimentConfig> {
    let (d, m, k, m_n) = if desk { (2, 20_000, 250, 50) } else { (10, 500_000, 500, 250) };
    let seeds = seeds_from(seed);
    let params = AffineParams::sample_reference(d, 10.0, seeds.model_params)?;
    let weights = basket_weights(d);
    let forward: f64 = weights.iter().map(|w| 10.0 * w).sum();
    let model = ModelSpec::affine(params)?;
    let strike = if desk {
        let a = model.diffusion_matrix_at(0.0, &model.initial_state())?;
        let wv = nalgebra::DVector::from_column_slice(&weights);
        forward + (wv.dot(&(&a * &wv))).sqrt()
    } else {
        4.0
    };
    let norm = weights.iter().map(|w| w * w).sum::<f64>().sqrt();
    let mut config = base(model, PayoffSpec::BasketPut { strike, weights }, k, m, m_n, seed)?;
    config.oracle.quad = QuadratureSpec {
        u_max: 400.0 / norm,
        ..QuadratureSpec::default()
    };
    Ok(config)
}

pub fn preset(which: Preset, desk: bool, seed: u64) -> Result<ExperimentConfig> {
    match which {
        Preset::Bm => bm(desk, seed),
        Preset::Cev => cev(desk, seed),
        Preset::Affine => affine(desk, seed),
    }
}

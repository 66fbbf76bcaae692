//! Oracle-versus-Monte-Carlo checks run by `oracle-check` and the
//! acceptance suite.

use ndarray::ArrayView2;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use super::payoff::PayoffSpec;
use super::presets;
use crate::error::Result;
use crate::models::{ModelSpec, PathSimulator, TimeGrid};
use crate::oracle::{bm_call_price, mc_reference_price, riccati_charfn, AsianPutPricer, BasketPutPricer, QuadratureSpec};

/// One comparison. `pass` is `|value − reference| ≤ tolerance`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckLine {
    pub name: String,
    pub value: f64,
    pub reference: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl CheckLine {
    pub fn new(name: impl Into<String>, value: f64, reference: f64, tolerance: f64) -> Self {
        CheckLine {
            name: name.into(),
            value,
            reference,
            tolerance,
            pass: (value - reference).abs() <= tolerance,
        }
    }
}

impl std::fmt::Display for CheckLine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} {}: value {:.6e}, reference {:.6e}, |diff| {:.3e} <= {:.3e}",
            if self.pass { "PASS" } else { "FAIL" },
            self.name,
            self.value,
            self.reference,
            (self.value - self.reference).abs(),
            self.tolerance
        )
    }
}

/// Sizes used by the checks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CheckSizes {
    pub n_paths: usize,
    pub steps: usize,
    pub ode_steps: usize,
}

impl CheckSizes {
    pub fn new(desk: bool) -> Self {
        CheckSizes {
            n_paths: if desk { 20_000 } else { 100_000 },
            steps: 250,
            ode_steps: 100,
        }
    }
}

fn terminal_states(model: &ModelSpec, grid: TimeGrid, n_paths: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    let d = model.dim();
    let sim = PathSimulator::new(model, grid, seed);
    (0..n_paths)
        .into_par_iter()
        .map_init(
            || vec![0.0; (grid.steps + 1) * d],
            |buf, m| {
                sim.simulate_into(m, buf)?;
                Ok(buf[grid.steps * d..].to_vec())
            },
        )
        .collect()
}

fn mean_se(v: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = v.clone().count() as f64;
    let mean = v.clone().sum::<f64>() / n;
    let var = v.map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// `E[exp(iuX_T)]` of the driftless CEV model against Monte Carlo (real and
/// imaginary parts, three standard errors), plus the relative change of the
/// transform when the ODE step count is doubled.
pub fn cev_charfn_checks(sizes: CheckSizes, seed: u64, us: &[f64]) -> Result<Vec<CheckLine>> {
    let model = ModelSpec::cev(100.0, -0.02, 0.4)?.zero_drift();
    let grid = TimeGrid::new(1.0, sizes.steps)?;
    let x_t = terminal_states(&model, grid, sizes.n_paths, seed)?;
    let x0 = model.initial_state();
    let mut out = Vec::new();
    for &u in us {
        let z = [Complex64::new(0.0, u)];
        let coarse = riccati_charfn(&model, &z, Complex64::new(0.0, 0.0), 1.0, 1.0, sizes.ode_steps)?.transform(&x0);
        let fine = riccati_charfn(&model, &z, Complex64::new(0.0, 0.0), 1.0, 1.0, 2 * sizes.ode_steps)?.transform(&x0);
        let (re, re_se) = mean_se(x_t.iter().map(|x| (u * x[0]).cos()));
        let (im, im_se) = mean_se(x_t.iter().map(|x| (u * x[0]).sin()));
        out.push(CheckLine::new(format!("cev charfn re u={u}"), coarse.re, re, 3.0 * re_se));
        out.push(CheckLine::new(format!("cev charfn im u={u}"), coarse.im, im, 3.0 * im_se));
        out.push(CheckLine::new(
            format!("cev charfn ode step halving u={u}"),
            (coarse - fine).norm() / fine.norm(),
            0.0,
            1e-8,
        ));
    }
    Ok(out)
}

/// Time-zero value and delta of the CEV Asian put against Monte Carlo under
/// the martingale measure. The delta reference is a central
/// common-random-number bump of the initial state by `bump`.
pub fn cev_asian_checks(sizes: CheckSizes, seed: u64, bump: f64) -> Result<Vec<CheckLine>> {
    let config = presets::cev(true, seed)?;
    let model = config.model.zero_drift();
    let strike = config.payoff.strike();
    let grid = TimeGrid::new(1.0, sizes.steps)?;
    let x0 = model.initial_state()[0];
    let pricer = AsianPutPricer::new(&model, 0.0, strike, 1.0, &config.oracle.quad, sizes.ode_steps)?;
    let (value, delta) = pricer.value_delta(x0, 0.0)?;
    let payoff = PayoffSpec::AsianPut { strike };
    let (mc, se) = mc_reference_price(&model, &payoff, sizes.n_paths, grid, seed)?;
    let (up, _) = mc_reference_price(&model.with_initial_state(&[x0 + bump])?, &payoff, sizes.n_paths, grid, seed)?;
    let (down, _) = mc_reference_price(&model.with_initial_state(&[x0 - bump])?, &payoff, sizes.n_paths, grid, seed)?;
    let mc_delta = (up - down) / (2.0 * bump);
    Ok(vec![
        CheckLine::new("cev asian put value", value, mc, (0.005 * mc.abs()).max(3.0 * se)),
        CheckLine::new("cev asian put delta", delta, mc_delta, 0.05 * mc_delta.abs()),
    ])
}

/// The desk basket model and payoff used by the basket checks.
pub fn desk_basket(seed: u64) -> Result<(ModelSpec, f64, Vec<f64>, QuadratureSpec)> {
    let config = presets::affine(true, seed)?;
    match config.payoff {
        PayoffSpec::BasketPut { strike, weights } => Ok((config.model.zero_drift(), strike, weights, config.oracle.quad)),
        _ => unreachable!("affine preset prices a basket put"),
    }
}

/// Time-zero basket put value against Monte Carlo and each gradient
/// component against a central common-random-number Monte Carlo bump of
/// size `bump`.
pub fn basket_checks(sizes: CheckSizes, seed: u64, bump: f64) -> Result<Vec<CheckLine>> {
    let (model, strike, weights, quad) = desk_basket(seed)?;
    let grid = TimeGrid::new(1.0, sizes.steps)?;
    let x0 = model.initial_state();
    let pricer = BasketPutPricer::new(&model, 0.0, strike, &weights, 1.0, &quad, sizes.ode_steps)?;
    let (value, grad) = pricer.value_delta(&x0)?;
    let payoff = PayoffSpec::BasketPut { strike, weights };
    let (mc, se) = mc_reference_price(&model, &payoff, sizes.n_paths, grid, seed)?;
    let mut out = vec![CheckLine::new("basket put value", value, mc, (0.01 * mc.abs()).max(3.0 * se))];
    for i in 0..x0.len() {
        let mut up = x0.clone();
        let mut down = x0.clone();
        up[i] += bump;
        down[i] -= bump;
        let (pu, _) = mc_reference_price(&model.with_initial_state(&up)?, &payoff, sizes.n_paths, grid, seed)?;
        let (pd, _) = mc_reference_price(&model.with_initial_state(&down)?, &payoff, sizes.n_paths, grid, seed)?;
        let mc_delta = (pu - pd) / (2.0 * bump);
        out.push(CheckLine::new(format!("basket put delta[{i}] vs mc bump"), grad[i], mc_delta, 0.05 * mc_delta.abs()));
    }
    Ok(out)
}

/// Basket gradient against central differences of the oracle value.
pub fn basket_fd_checks(sizes: CheckSizes, seed: u64, fd_step: f64) -> Result<Vec<CheckLine>> {
    let (model, strike, weights, quad) = desk_basket(seed)?;
    let x0 = model.initial_state();
    let pricer = BasketPutPricer::new(&model, 0.0, strike, &weights, 1.0, &quad, sizes.ode_steps)?;
    let (_, grad) = pricer.value_delta(&x0)?;
    let mut out = Vec::new();
    for i in 0..x0.len() {
        let mut up = x0.clone();
        let mut down = x0.clone();
        up[i] += fd_step;
        down[i] -= fd_step;
        let fd = (pricer.value_delta(&up)?.0 - pricer.value_delta(&down)?.0) / (2.0 * fd_step);
        out.push(CheckLine::new(format!("basket put delta[{i}] vs oracle bump"), grad[i], fd, 0.05 * fd.abs()));
    }
    Ok(out)
}

/// Brownian call price against Monte Carlo.
pub fn bm_call_check(sizes: CheckSizes, seed: u64) -> Result<CheckLine> {
    let model = ModelSpec::brownian(vec![0.0])?;
    let grid = TimeGrid::new(1.0, sizes.steps)?;
    let call = |p: ArrayView2<f64>, g: &TimeGrid| (p[[g.steps, 0]] + 0.5).max(0.0);
    let (mc, se) = mc_reference_price(&model, &call, sizes.n_paths, grid, seed)?;
    Ok(CheckLine::new("bm call value", bm_call_price(0.0, 0.0, -0.5, 1.0)?, mc, 3.0 * se))
}

/// Every oracle check at the given scale.
pub fn run_oracle_checks(desk: bool, seed: u64) -> Result<Vec<CheckLine>> {
    let sizes = CheckSizes::new(desk);
    let mut out = vec![bm_call_check(sizes, seed)?];
    out.extend(cev_charfn_checks(sizes, seed, &[0.01, 0.05, 0.1])?);
    out.extend(cev_asian_checks(sizes, seed, 0.5)?);
    out.extend(basket_checks(sizes, seed, 0.1)?);
    out.extend(basket_fd_checks(sizes, seed, 1e-3)?);
    Ok(out)
}

//! Put values and deltas by Fourier inversion.
//!
//! For a random variable `Y` with transform `E[e^{iuY}] = exp(φ + ψᵀx)`,
//! Gil-Pelaez inversion gives
//!
//! ```text
//! P(Y ≤ K)       = 1/2    − (1/π) ∫_0^∞ Im(e^{−iuK} E[e^{iuY}]) / u du
//! E[Y 1{Y ≤ K}]  = E[Y]/2 − (1/π) ∫_0^∞ Im(e^{−iuK} E[Y e^{iuY}]) / u du
//! ```
//!
//! where `E[Y e^{iuY}] = (φ' + ψ'ᵀx) exp(φ + ψᵀx)` with `'` the derivative in
//! the direction that produces `Y` (the time-integral weight for Asian
//! options, `z_1 = w` for baskets). A put is then
//! `A·P(Y ≤ K) − E[Y 1{Y ≤ K}]`, and its gradient in `x` follows by
//! differentiating the exponentials.

use std::f64::consts::PI;

use num_complex::Complex64;

use super::quadrature::QuadratureSpec;
use super::riccati::{solve, AffineCoeffs, RiccatiSolution};
use crate::error::{Error, Result};
use crate::models::ModelSpec;

/// Beyond this many standard deviations between `E[Y]` and the strike the
/// indicator is treated as deterministic.
const DETERMINISTIC_Z: f64 = 10.0;
/// The truncation point is widened to at least this many inverse standard
/// deviations of `Y`.
const DECAY_WIDTHS: f64 = 10.0;
const U_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone)]
struct Node {
    u: f64,
    weight: f64,
    phi: Complex64,
    psi: Vec<Complex64>,
    dphi: Complex64,
    dpsi: Vec<Complex64>,
}

/// Transform data of `Y` at one time to maturity.
#[derive(Debug, Clone)]
struct InversionSlice {
    nodes: Vec<Node>,
    /// `E[Y] = mean_phi + mean_psiᵀx`.
    mean_phi: f64,
    mean_psi: Vec<f64>,
}

enum Target<'a> {
    /// `Y = (1/T) ∫_t^T X ds`.
    TimeIntegral,
    /// `Y = wᵀ X_T`.
    Linear(&'a [f64]),
}

impl InversionSlice {
    #[allow(clippy::too_many_arguments)]
    fn build(
        coeffs: &AffineCoeffs,
        target: Target<'_>,
        tau: f64,
        horizon: f64,
        upper: f64,
        quad: &QuadratureSpec,
        ode_steps: usize,
    ) -> Result<Self> {
        let d = coeffs.dim();
        let zero = Complex64::new(0.0, 0.0);
        let ones = vec![1.0; d];
        let run = |u: f64| -> Result<RiccatiSolution> {
            match target {
                Target::TimeIntegral => solve(coeffs, &vec![zero; d], Complex64::new(0.0, u), &ones, None, tau, horizon, ode_steps),
                Target::Linear(w) => {
                    let z1: Vec<Complex64> = w.iter().map(|wk| Complex64::new(0.0, u * wk)).collect();
                    solve(coeffs, &z1, zero, &ones, Some(w), tau, horizon, ode_steps)
                }
            }
        };
        let pick = |s: RiccatiSolution| match target {
            Target::TimeIntegral => (s.phi, s.psi, s.dphi_dz2, s.dpsi_dz2),
            Target::Linear(_) => (s.phi, s.psi, s.dphi_dir, s.dpsi_dir),
        };
        let (_, _, m_phi, m_psi) = pick(run(0.0)?);
        let nodes = quad
            .nodes(upper)?
            .into_iter()
            .map(|(u, weight)| {
                let u = u.max(U_FLOOR);
                let (phi, psi, dphi, dpsi) = pick(run(u)?);
                Ok(Node { u, weight, phi, psi, dphi, dpsi })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(InversionSlice {
            nodes,
            mean_phi: m_phi.re,
            mean_psi: m_psi.iter().map(|v| v.re).collect(),
        })
    }

    fn mean(&self, x: &[f64]) -> f64 {
        self.mean_phi + self.mean_psi.iter().zip(x).map(|(a, b)| a * b).sum::<f64>()
    }

    /// Value and gradient of `multiplier · P(Y ≤ strike) − E[Y 1{Y ≤ strike}]`.
    fn put(&self, x: &[f64], strike: f64, multiplier: f64, std_y: f64) -> Result<(f64, Vec<f64>)> {
        let d = x.len();
        let mean = self.mean(x);
        if std_y > 0.0 && (strike - mean) > DETERMINISTIC_Z * std_y {
            return Ok((multiplier - mean, self.mean_psi.iter().map(|m| -m).collect()));
        }
        if std_y > 0.0 && (mean - strike) > DETERMINISTIC_Z * std_y {
            return Ok((0.0, vec![0.0; d]));
        }
        let mut p_int = 0.0;
        let mut e_int = 0.0;
        let mut gp = vec![0.0; d];
        let mut ge = vec![0.0; d];
        for n in &self.nodes {
            let exponent = n.phi + n.psi.iter().zip(x).map(|(p, x)| p * x).sum::<Complex64>();
            let s = n.dphi + n.dpsi.iter().zip(x).map(|(p, x)| p * x).sum::<Complex64>();
            let rot = (exponent - Complex64::new(0.0, n.u * strike)).exp() * (n.weight / n.u);
            p_int += rot.im;
            e_int += (rot * s).im;
            for i in 0..d {
                gp[i] += (rot * n.psi[i]).im;
                ge[i] += (rot * (n.dpsi[i] + s * n.psi[i])).im;
            }
        }
        let prob = 0.5 - p_int / PI;
        let partial = 0.5 * mean - e_int / PI;
        let value = multiplier * prob - partial;
        let grad: Vec<f64> = (0..d)
            .map(|i| multiplier * (-gp[i] / PI) - (0.5 * self.mean_psi[i] - ge[i] / PI))
            .collect();
        if !value.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::Numerical(
                "Fourier inversion produced a non-finite value; increase ode_steps or reduce u_max".into(),
            ));
        }
        Ok((value, grad))
    }
}

fn widened_upper(quad: &QuadratureSpec, std_y: f64) -> f64 {
    if std_y > 0.0 {
        quad.u_max.max(DECAY_WIDTHS / std_y)
    } else {
        quad.u_max
    }
}

fn check_time(t: f64, horizon: f64) -> Result<f64> {
    if !(horizon > 0.0 && t >= 0.0 && t <= horizon) {
        return Err(Error::Domain(format!("need 0 <= t <= T, got t={t}, T={horizon}")));
    }
    Ok(horizon - t)
}

/// Asian put `max(K − (1/T)∫_0^T X ds, 0)` at one time slice, for a
/// one-dimensional affine model (drift already removed by the caller).
#[derive(Debug, Clone)]
pub struct AsianPutPricer {
    strike: f64,
    horizon: f64,
    tau: f64,
    /// `a(x)` for the standard deviation estimate of `I_{t,T}`.
    coeffs: AffineCoeffs,
    slice: Option<InversionSlice>,
}

impl AsianPutPricer {
    pub fn new(model: &ModelSpec, t: f64, strike: f64, horizon: f64, quad: &QuadratureSpec, ode_steps: usize) -> Result<Self> {
        if model.dim() != 1 {
            return Err(Error::Domain("the Asian pricer needs a one-dimensional model".into()));
        }
        let tau = check_time(t, horizon)?;
        let coeffs = AffineCoeffs::from_model(model)?;
        let mut pricer = AsianPutPricer {
            strike,
            horizon,
            tau,
            coeffs,
            slice: None,
        };
        if tau > 0.0 {
            // a quarter of the initial state as a conservative level for the width
            let x_ref = 0.25 * model.initial_state()[0];
            let upper = widened_upper(quad, pricer.std_of_average(x_ref));
            pricer.slice = Some(InversionSlice::build(&pricer.coeffs, Target::TimeIntegral, tau, horizon, upper, quad, ode_steps)?);
        }
        Ok(pricer)
    }

    /// `sd(I_{t,T}) ≈ √(a(x) τ³ / (3 T²))`.
    fn std_of_average(&self, x: f64) -> f64 {
        let a = (self.coeffs.alpha0[(0, 0)] + self.coeffs.alphas[0][(0, 0)] * x.max(0.0)).max(0.0);
        (a * self.tau.powi(3) / (3.0 * self.horizon * self.horizon)).sqrt()
    }

    /// Value and `∂/∂x_t` given `X_t = x` and the running average
    /// `I_{0,t} = (1/T)∫_0^t X ds`, which is held fixed.
    pub fn value_delta(&self, x: f64, running_avg: f64) -> Result<(f64, f64)> {
        let shifted = self.strike - running_avg;
        match &self.slice {
            None => Ok((shifted.max(0.0), 0.0)),
            Some(slice) => {
                let (v, g) = slice.put(&[x], shifted, shifted, self.std_of_average(x))?;
                Ok((v, g[0]))
            }
        }
    }
}

/// One-off Asian put value and delta at `(t, x_t)`.
#[allow(clippy::too_many_arguments)]
pub fn asian_put_value_delta(
    model: &ModelSpec,
    x_t: f64,
    running_avg: f64,
    t: f64,
    strike: f64,
    horizon: f64,
    quad: &QuadratureSpec,
    ode_steps: usize,
) -> Result<(f64, f64)> {
    AsianPutPricer::new(model, t, strike, horizon, quad, ode_steps)?.value_delta(x_t, running_avg)
}

/// Basket put `max(K − wᵀX_T, 0)` at one time slice.
#[derive(Debug, Clone)]
pub struct BasketPutPricer {
    strike: f64,
    weights: Vec<f64>,
    tau: f64,
    model: ModelSpec,
    slice: Option<InversionSlice>,
}

impl BasketPutPricer {
    pub fn new(
        model: &ModelSpec,
        t: f64,
        strike: f64,
        weights: &[f64],
        horizon: f64,
        quad: &QuadratureSpec,
        ode_steps: usize,
    ) -> Result<Self> {
        if weights.len() != model.dim() {
            return Err(Error::contract(format!(
                "basket weights have length {} but the model has dimension {}",
                weights.len(),
                model.dim()
            )));
        }
        let tau = check_time(t, horizon)?;
        let coeffs = AffineCoeffs::from_model(model)?;
        let mut pricer = BasketPutPricer {
            strike,
            weights: weights.to_vec(),
            tau,
            model: model.clone(),
            slice: None,
        };
        if tau > 0.0 && weights.iter().any(|w| *w != 0.0) {
            let x_ref: Vec<f64> = model.initial_state().iter().map(|x| 0.25 * x).collect();
            let upper = widened_upper(quad, pricer.std_of_basket(&x_ref));
            pricer.slice = Some(InversionSlice::build(&coeffs, Target::Linear(weights), tau, horizon, upper, quad, ode_steps)?);
        }
        Ok(pricer)
    }

    /// `sd(wᵀX_T) ≈ √(τ wᵀa(x)w)`.
    fn std_of_basket(&self, x: &[f64]) -> f64 {
        let a = self.model.diffusion_matrix(x);
        let w = &self.weights;
        let mut q = 0.0;
        for i in 0..w.len() {
            for j in 0..w.len() {
                q += w[i] * a[(i, j)] * w[j];
            }
        }
        (self.tau * q.max(0.0)).sqrt()
    }

    pub fn value_delta(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        if x.len() != self.weights.len() {
            return Err(Error::contract("state and basket weights differ in length"));
        }
        match &self.slice {
            None => {
                let y: f64 = self.weights.iter().zip(x).map(|(w, x)| w * x).sum();
                let itm = self.strike > y;
                let grad = self.weights.iter().map(|w| if itm { -w } else { 0.0 }).collect();
                Ok(((self.strike - y).max(0.0), grad))
            }
            Some(slice) => slice.put(x, self.strike, self.strike, self.std_of_basket(x)),
        }
    }
}

/// One-off basket put value and gradient at `(t, x_t)`.
#[allow(clippy::too_many_arguments)]
pub fn basket_put_value_delta(
    model: &ModelSpec,
    x_t: &[f64],
    t: f64,
    strike: f64,
    weights: &[f64],
    horizon: f64,
    quad: &QuadratureSpec,
    ode_steps: usize,
) -> Result<(f64, Vec<f64>)> {
    BasketPutPricer::new(model, t, strike, weights, horizon, quad, ode_steps)?.value_delta(x_t)
}

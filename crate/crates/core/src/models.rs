//! Diffusion models and Euler-Maruyama path simulation.
//!
//! Four model families are supported: multi-dimensional Brownian motion, the
//! square-root CEV model, one-dimensional polynomial diffusions and
//! multi-dimensional affine diffusions with one Brownian driver per asset.
//!
//! Constrained state spaces use full truncation: coefficients are evaluated
//! at the projected state `X⁺` and the stored state is `X⁺` as well, so every
//! node of a [`PathBatch`] lies in the state space.

use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use ndarray::{s, Array3, ArrayView3, Axis};
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{substream, Domain};

const SYMMETRY_TOL: f64 = 1e-12;
const PSD_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StateSpace {
    RealLine,
    NonNegative,
    UnitInterval,
}

impl StateSpace {
    /// Projection onto the state space.
    pub fn truncate(self, x: f64) -> f64 {
        match self {
            StateSpace::RealLine => x,
            StateSpace::NonNegative => x.max(0.0),
            StateSpace::UnitInterval => x.clamp(0.0, 1.0),
        }
    }

    fn probe_points(self) -> Vec<f64> {
        let (lo, hi, n) = match self {
            StateSpace::RealLine => (-1.0e3, 1.0e3, 4001),
            StateSpace::NonNegative => (0.0, 1.0e3, 2001),
            StateSpace::UnitInterval => (0.0, 1.0, 1001),
        };
        (0..n)
            .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
            .collect()
    }
}

/// Parameters of `dX = (β₀ + Σ_k β_k X_k) dt + √(α₀ + Σ_k α_k X_k⁺) dB`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineParams {
    pub x0: DVector<f64>,
    pub beta0: DVector<f64>,
    /// `beta[k]` multiplies the k-th state coordinate in the drift.
    pub beta: Vec<DVector<f64>>,
    pub alpha0: DMatrix<f64>,
    /// `alphas[k]` multiplies the k-th state coordinate in the diffusion.
    pub alphas: Vec<DMatrix<f64>>,
}

impl AffineParams {
    pub fn dim(&self) -> usize {
        self.x0.len()
    }

    /// Random parameters following the reference basket experiment:
    /// `β₀ᵢ ~ N(0, 3e-3)`, `β_{k,i} ~ N(0, 3e-4)`, `α_k = r_k r_kᵀ` with
    /// `r₀ᵢ ~ N(0, 3e-2)` and `r_{k,i} ~ N(0, 3e-3)` (second arguments are
    /// variances). Draw order: β₀, β₁..β_d, r₀, r₁..r_d.
    pub fn sample_reference(d: usize, x0: f64, seed: u64) -> Result<Self> {
        if d == 0 {
            return Err(Error::Config("affine model needs d >= 1".into()));
        }
        let mut rng = substream(seed, Domain::ModelParams, 0);
        let mut normal_vec = |var: f64| -> DVector<f64> {
            let dist = Normal::new(0.0, var.sqrt()).expect("positive variance");
            DVector::from_iterator(d, (0..d).map(|_| dist.sample(&mut rng)))
        };
        let beta0 = normal_vec(3e-3);
        let beta = (0..d).map(|_| normal_vec(3e-4)).collect();
        let r0 = normal_vec(3e-2);
        let rs: Vec<_> = (0..d).map(|_| normal_vec(3e-3)).collect();
        let alpha0 = &r0 * r0.transpose();
        let alphas = rs.iter().map(|r| r * r.transpose()).collect();
        let params = AffineParams {
            x0: DVector::from_element(d, x0),
            beta0,
            beta,
            alpha0,
            alphas,
        };
        params.validated()
    }

    fn validated(mut self) -> Result<Self> {
        let d = self.x0.len();
        if d == 0 {
            return Err(Error::Config("affine model needs d >= 1".into()));
        }
        if self.beta0.len() != d || self.beta.len() != d || self.alphas.len() != d {
            return Err(Error::Config(format!(
                "affine model of dimension {d} needs beta0 of length d and d entries in beta and alphas"
            )));
        }
        if self.beta.iter().any(|b| b.len() != d) {
            return Err(Error::Config("every beta_k must have length d".into()));
        }
        self.alpha0 = symmetrized("alpha0", &self.alpha0, d)?;
        for (k, a) in self.alphas.iter_mut().enumerate() {
            *a = symmetrized(&format!("alphas[{k}]"), a, d)?;
        }
        let finite = self.x0.iter().chain(self.beta0.iter()).all(|v| v.is_finite())
            && self.beta.iter().all(|b| b.iter().all(|v| v.is_finite()));
        if !finite {
            return Err(Error::Config("affine parameters must be finite".into()));
        }
        Ok(self)
    }
}

fn symmetrized(name: &str, m: &DMatrix<f64>, d: usize) -> Result<DMatrix<f64>> {
    if m.nrows() != d || m.ncols() != d {
        return Err(Error::Config(format!("{name} must be {d}x{d}")));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::Config(format!("{name} must be finite")));
    }
    let scale = m.amax().max(1.0);
    let asym = (m - m.transpose()).amax();
    if asym > SYMMETRY_TOL * scale {
        return Err(Error::Config(format!(
            "{name} is not symmetric (max asymmetry {asym:e})"
        )));
    }
    let sym = (m + m.transpose()) * 0.5;
    let min_eig = sym.clone().symmetric_eigenvalues().min();
    if min_eig < -PSD_TOL * scale {
        return Err(Error::Config(format!(
            "{name} is not positive semidefinite (smallest eigenvalue {min_eig:e})"
        )));
    }
    Ok(sym)
}

/// A diffusion model specification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawModelSpec", into = "RawModelSpec")]
pub enum ModelSpec {
    BrownianMotion {
        x0: Vec<f64>,
    },
    Cev {
        x0: f64,
        alpha: f64,
        sigma0: f64,
    },
    Polynomial1D {
        x0: f64,
        beta0: f64,
        beta1: f64,
        alpha0: f64,
        alpha1: f64,
        alpha2: f64,
        state_space: StateSpace,
    },
    AffineMultiD(AffineParams),
}

impl ModelSpec {
    pub fn brownian(x0: Vec<f64>) -> Result<Self> {
        if x0.is_empty() || x0.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config(
                "brownian motion needs a non-empty finite initial state".into(),
            ));
        }
        Ok(ModelSpec::BrownianMotion { x0 })
    }

    pub fn cev(x0: f64, alpha: f64, sigma0: f64) -> Result<Self> {
        if !(x0 > 0.0 && x0.is_finite()) || !(sigma0 > 0.0 && sigma0.is_finite()) || !alpha.is_finite() {
            return Err(Error::Config(format!(
                "CEV model needs x0 > 0 and sigma0 > 0 (got x0={x0}, sigma0={sigma0}, alpha={alpha})"
            )));
        }
        Ok(ModelSpec::Cev { x0, alpha, sigma0 })
    }

    #[allow(clippy::too_many_arguments)]
    pub fn polynomial_1d(
        x0: f64,
        beta0: f64,
        beta1: f64,
        alpha0: f64,
        alpha1: f64,
        alpha2: f64,
        state_space: StateSpace,
    ) -> Result<Self> {
        let params = [x0, beta0, beta1, alpha0, alpha1, alpha2];
        if params.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("polynomial diffusion parameters must be finite".into()));
        }
        if state_space.truncate(x0) != x0 {
            return Err(Error::Config(format!("x0={x0} lies outside {state_space:?}")));
        }
        let scale = alpha0.abs().max(alpha1.abs()).max(alpha2.abs()).max(1.0);
        for x in state_space.probe_points() {
            let a = alpha0 + alpha1 * x + alpha2 * x * x;
            if a < -1e-12 * scale * (1.0 + x * x) {
                return Err(Error::Config(format!(
                    "diffusion coefficient alpha0 + alpha1 x + alpha2 x^2 is negative ({a:e}) at x={x}"
                )));
            }
        }
        Ok(ModelSpec::Polynomial1D {
            x0,
            beta0,
            beta1,
            alpha0,
            alpha1,
            alpha2,
            state_space,
        })
    }

    pub fn affine(params: AffineParams) -> Result<Self> {
        Ok(ModelSpec::AffineMultiD(params.validated()?))
    }

    /// State dimension `d` (equal to the number of Brownian drivers).
    pub fn dim(&self) -> usize {
        match self {
            ModelSpec::BrownianMotion { x0 } => x0.len(),
            ModelSpec::Cev { .. } | ModelSpec::Polynomial1D { .. } => 1,
            ModelSpec::AffineMultiD(p) => p.dim(),
        }
    }

    pub fn initial_state(&self) -> Vec<f64> {
        match self {
            ModelSpec::BrownianMotion { x0 } => x0.clone(),
            ModelSpec::Cev { x0, .. } | ModelSpec::Polynomial1D { x0, .. } => vec![*x0],
            ModelSpec::AffineMultiD(p) => p.x0.iter().copied().collect(),
        }
    }

    /// Projects `x` in place onto the model's state space.
    pub fn truncate_state(&self, x: &mut [f64]) {
        match self {
            ModelSpec::Cev { .. } => x[0] = x[0].max(0.0),
            ModelSpec::Polynomial1D { state_space, .. } => x[0] = state_space.truncate(x[0]),
            ModelSpec::BrownianMotion { .. } | ModelSpec::AffineMultiD(_) => {}
        }
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::contract(format!(
                "state has length {} but the model has dimension {}",
                x.len(),
                self.dim()
            )));
        }
        Ok(())
    }

    /// Drift `b(t, x)`.
    pub fn drift_at(&self, _t: f64, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        let mut out = vec![0.0; self.dim()];
        self.drift_into(x, &mut out);
        Ok(out)
    }

    fn drift_into(&self, x: &[f64], out: &mut [f64]) {
        match self {
            ModelSpec::BrownianMotion { .. } => out.fill(0.0),
            ModelSpec::Cev { alpha, .. } => out[0] = alpha * x[0],
            ModelSpec::Polynomial1D { beta0, beta1, .. } => out[0] = beta0 + beta1 * x[0],
            ModelSpec::AffineMultiD(p) => {
                for (i, o) in out.iter_mut().enumerate() {
                    *o = p.beta0[i] + p.beta.iter().zip(x).map(|(b, xk)| b[i] * xk).sum::<f64>();
                }
            }
        }
    }

    /// Diffusion matrix `a(t, x) = σσᵀ`, evaluated at the truncated state and
    /// projected onto the positive semidefinite cone.
    pub fn diffusion_matrix_at(&self, _t: f64, x: &[f64]) -> Result<DMatrix<f64>> {
        self.check_dim(x)?;
        Ok(self.diffusion_matrix(x))
    }

    pub(crate) fn diffusion_matrix(&self, x: &[f64]) -> DMatrix<f64> {
        match self {
            ModelSpec::BrownianMotion { x0 } => DMatrix::identity(x0.len(), x0.len()),
            ModelSpec::Cev { sigma0, .. } => {
                DMatrix::from_element(1, 1, sigma0 * sigma0 * x[0].max(0.0))
            }
            ModelSpec::Polynomial1D { .. } => DMatrix::from_element(1, 1, self.scalar_variance(x[0])),
            ModelSpec::AffineMultiD(p) => {
                let mut a = p.alpha0.clone();
                for (ak, xk) in p.alphas.iter().zip(x) {
                    let w = xk.max(0.0);
                    if w > 0.0 {
                        a += ak * w;
                    }
                }
                project_psd(a)
            }
        }
    }

    /// Scalar `a(x)` for one-dimensional models.
    pub(crate) fn scalar_variance(&self, x: f64) -> f64 {
        match self {
            ModelSpec::BrownianMotion { .. } => 1.0,
            ModelSpec::Cev { sigma0, .. } => sigma0 * sigma0 * x.max(0.0),
            ModelSpec::Polynomial1D {
                alpha0,
                alpha1,
                alpha2,
                state_space,
                ..
            } => {
                let x = state_space.truncate(x);
                (alpha0 + alpha1 * x + alpha2 * x * x).max(0.0)
            }
            ModelSpec::AffineMultiD(_) => unreachable!("affine models use the matrix path"),
        }
    }

    /// A factor `S` with `S Sᵀ = a(t, x)`: the symmetric square root from an
    /// eigendecomposition with negative eigenvalues clipped to zero.
    pub fn diffusion_factor_at(&self, t: f64, x: &[f64]) -> Result<DMatrix<f64>> {
        let a = self.diffusion_matrix_at(t, x)?;
        sqrt_psd(a).ok_or_else(|| {
            Error::Numerical(format!("eigensolver did not converge at state {x:?}"))
        })
    }

    /// The same model started from `x0`.
    pub fn with_initial_state(&self, x0: &[f64]) -> Result<ModelSpec> {
        self.check_dim(x0)?;
        let mut out = self.clone();
        match &mut out {
            ModelSpec::BrownianMotion { x0: s } => s.copy_from_slice(x0),
            ModelSpec::Cev { x0: s, .. } | ModelSpec::Polynomial1D { x0: s, .. } => *s = x0[0],
            ModelSpec::AffineMultiD(p) => p.x0.copy_from_slice(x0),
        }
        if x0.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("initial state must be finite".into()));
        }
        Ok(out)
    }

    /// The same model with all drift parameters set to zero.
    pub fn zero_drift(&self) -> ModelSpec {
        match self {
            ModelSpec::BrownianMotion { .. } => self.clone(),
            ModelSpec::Cev { x0, sigma0, .. } => ModelSpec::Cev {
                x0: *x0,
                alpha: 0.0,
                sigma0: *sigma0,
            },
            ModelSpec::Polynomial1D {
                x0,
                alpha0,
                alpha1,
                alpha2,
                state_space,
                ..
            } => ModelSpec::Polynomial1D {
                x0: *x0,
                beta0: 0.0,
                beta1: 0.0,
                alpha0: *alpha0,
                alpha1: *alpha1,
                alpha2: *alpha2,
                state_space: *state_space,
            },
            ModelSpec::AffineMultiD(p) => {
                let d = p.dim();
                ModelSpec::AffineMultiD(AffineParams {
                    beta0: DVector::zeros(d),
                    beta: vec![DVector::zeros(d); d],
                    ..p.clone()
                })
            }
        }
    }

    pub fn is_driftless(&self) -> bool {
        match self {
            ModelSpec::BrownianMotion { .. } => true,
            ModelSpec::Cev { alpha, .. } => *alpha == 0.0,
            ModelSpec::Polynomial1D { beta0, beta1, .. } => *beta0 == 0.0 && *beta1 == 0.0,
            ModelSpec::AffineMultiD(p) => {
                p.beta0.iter().all(|v| *v == 0.0) && p.beta.iter().all(|b| b.iter().all(|v| *v == 0.0))
            }
        }
    }

    /// A constant `C_L` with `‖b(t,x)‖ + ‖a(t,x)‖_F ≤ C_L (1 + ‖x‖)` on the
    /// state space, or `None` when the coefficients grow faster than linearly.
    pub fn linear_growth_constant(&self) -> Option<f64> {
        match self {
            ModelSpec::BrownianMotion { x0 } => Some((x0.len() as f64).sqrt()),
            ModelSpec::Cev { alpha, sigma0, .. } => Some(alpha.abs() + sigma0 * sigma0),
            ModelSpec::Polynomial1D {
                beta0,
                beta1,
                alpha0,
                alpha1,
                alpha2,
                state_space,
                ..
            } => {
                let quad = match (state_space, *alpha2 == 0.0) {
                    (_, true) => 0.0,
                    // |x|² ≤ |x| on the unit interval
                    (StateSpace::UnitInterval, false) => alpha2.abs(),
                    _ => return None,
                };
                let c0 = beta0.abs() + alpha0.abs();
                let c1 = beta1.abs() + alpha1.abs() + quad;
                Some(c0.max(c1).max(f64::MIN_POSITIVE))
            }
            ModelSpec::AffineMultiD(p) => {
                let c0 = p.beta0.norm() + p.alpha0.norm();
                let c1 = p
                    .beta
                    .iter()
                    .zip(&p.alphas)
                    .map(|(b, a)| (b.norm() + a.norm()).powi(2))
                    .sum::<f64>()
                    .sqrt();
                Some(c0.max(c1).max(f64::MIN_POSITIVE))
            }
        }
    }

    /// Upper bound `max(‖X₀‖, 2n)^{2n} e^{8 n C_L √d T}` on
    /// `sup_t E‖X_t‖^{2n}`, available for linear-growth models.
    pub fn moment_bound(&self, n: u32, horizon: f64) -> Option<f64> {
        let cl = self.linear_growth_constant()?;
        let x0 = self.initial_state();
        let norm0 = x0.iter().map(|v| v * v).sum::<f64>().sqrt();
        let n_f = f64::from(n);
        let d = self.dim() as f64;
        Some(norm0.max(2.0 * n_f).powf(2.0 * n_f) * (8.0 * n_f * cl * d.sqrt() * horizon).exp())
    }
}

fn project_psd(a: DMatrix<f64>) -> DMatrix<f64> {
    if a.nrows() == 1 {
        return a.map(|v| v.max(0.0));
    }
    if a.clone().cholesky().is_some() {
        return a;
    }
    match SymmetricEigen::try_new(a.clone(), f64::EPSILON, 10_000) {
        Some(eig) => {
            let clipped = eig.eigenvalues.map(|v| v.max(0.0));
            &eig.eigenvectors * DMatrix::from_diagonal(&clipped) * eig.eigenvectors.transpose()
        }
        None => a,
    }
}

fn sqrt_psd(a: DMatrix<f64>) -> Option<DMatrix<f64>> {
    if a.nrows() == 1 {
        return Some(a.map(|v| v.max(0.0).sqrt()));
    }
    let eig = SymmetricEigen::try_new(a, f64::EPSILON, 10_000)?;
    let roots = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    Some(&eig.eigenvectors * DMatrix::from_diagonal(&roots) * eig.eigenvectors.transpose())
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum RawModelSpec {
    BrownianMotion {
        d: usize,
        x0: Vec<f64>,
    },
    Cev {
        x0: f64,
        alpha: f64,
        sigma0: f64,
    },
    /// `beta` is the linear drift coefficient, `alphas = [alpha1, alpha2]`.
    #[serde(rename = "polynomial_1d")]
    Polynomial1D {
        x0: f64,
        beta0: f64,
        beta: f64,
        alpha0: f64,
        alphas: [f64; 2],
        state_space: StateSpace,
    },
    #[serde(rename = "affine")]
    AffineMultiD {
        d: usize,
        x0: Vec<f64>,
        beta0: Vec<f64>,
        beta: Vec<Vec<f64>>,
        alpha0: Vec<Vec<f64>>,
        alphas: Vec<Vec<Vec<f64>>>,
    },
}

fn matrix_from_rows(name: &str, rows: &[Vec<f64>], d: usize) -> Result<DMatrix<f64>> {
    if rows.len() != d || rows.iter().any(|r| r.len() != d) {
        return Err(Error::Config(format!("{name} must be a {d}x{d} matrix")));
    }
    Ok(DMatrix::from_fn(d, d, |i, j| rows[i][j]))
}

fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

impl TryFrom<RawModelSpec> for ModelSpec {
    type Error = Error;

    fn try_from(raw: RawModelSpec) -> Result<Self> {
        match raw {
            RawModelSpec::BrownianMotion { d, x0 } => {
                if d != x0.len() {
                    return Err(Error::Config(format!(
                        "brownian motion: d={d} but x0 has length {}",
                        x0.len()
                    )));
                }
                ModelSpec::brownian(x0)
            }
            RawModelSpec::Cev { x0, alpha, sigma0 } => ModelSpec::cev(x0, alpha, sigma0),
            RawModelSpec::Polynomial1D {
                x0,
                beta0,
                beta,
                alpha0,
                alphas,
                state_space,
            } => ModelSpec::polynomial_1d(x0, beta0, beta, alpha0, alphas[0], alphas[1], state_space),
            RawModelSpec::AffineMultiD {
                d,
                x0,
                beta0,
                beta,
                alpha0,
                alphas,
            } => {
                if x0.len() != d || beta0.len() != d || beta.len() != d || alphas.len() != d {
                    return Err(Error::Config(format!(
                        "affine model: x0, beta0, beta and alphas must all have {d} entries"
                    )));
                }
                let params = AffineParams {
                    x0: DVector::from_vec(x0),
                    beta0: DVector::from_vec(beta0),
                    beta: beta.into_iter().map(DVector::from_vec).collect(),
                    alpha0: matrix_from_rows("alpha0", &alpha0, d)?,
                    alphas: alphas
                        .iter()
                        .enumerate()
                        .map(|(k, a)| matrix_from_rows(&format!("alphas[{k}]"), a, d))
                        .collect::<Result<_>>()?,
                };
                ModelSpec::affine(params)
            }
        }
    }
}

impl From<ModelSpec> for RawModelSpec {
    fn from(model: ModelSpec) -> Self {
        match model {
            ModelSpec::BrownianMotion { x0 } => RawModelSpec::BrownianMotion { d: x0.len(), x0 },
            ModelSpec::Cev { x0, alpha, sigma0 } => RawModelSpec::Cev { x0, alpha, sigma0 },
            ModelSpec::Polynomial1D {
                x0,
                beta0,
                beta1,
                alpha0,
                alpha1,
                alpha2,
                state_space,
            } => RawModelSpec::Polynomial1D {
                x0,
                beta0,
                beta: beta1,
                alpha0,
                alphas: [alpha1, alpha2],
                state_space,
            },
            ModelSpec::AffineMultiD(p) => RawModelSpec::AffineMultiD {
                d: p.dim(),
                x0: p.x0.iter().copied().collect(),
                beta0: p.beta0.iter().copied().collect(),
                beta: p.beta.iter().map(|b| b.iter().copied().collect()).collect(),
                alpha0: matrix_to_rows(&p.alpha0),
                alphas: p.alphas.iter().map(matrix_to_rows).collect(),
            },
        }
    }
}

/// Equidistant grid `t_k = k T / K`, `k = 0..=K`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub horizon: f64,
    pub steps: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, steps: usize) -> Result<Self> {
        if !(horizon > 0.0 && horizon.is_finite()) || steps == 0 {
            return Err(Error::Config(format!(
                "time grid needs T > 0 and K >= 1 (got T={horizon}, K={steps})"
            )));
        }
        Ok(TimeGrid { horizon, steps })
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    pub fn time(&self, k: usize) -> f64 {
        if k == self.steps {
            self.horizon
        } else {
            self.horizon * k as f64 / self.steps as f64
        }
    }

    pub fn times(&self) -> Vec<f64> {
        (0..=self.steps).map(|k| self.time(k)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Measure {
    #[default]
    Physical,
    /// Drift removed; the price process is a local martingale.
    Martingale,
}

/// `M` simulated paths on a shared grid.
#[derive(Debug, Clone)]
pub struct PathBatch {
    pub grid: TimeGrid,
    /// `M × (K+1) × d`
    pub states: Array3<f64>,
    /// `M × K × d`, `increments[m,k] = states[m,k+1] - states[m,k]`.
    pub increments: Array3<f64>,
    pub seed: u64,
    pub measure: Measure,
}

impl PathBatch {
    /// Builds a batch from states, deriving the increments.
    pub fn from_states(grid: TimeGrid, states: Array3<f64>, seed: u64, measure: Measure) -> Result<Self> {
        if states.shape()[1] != grid.steps + 1 {
            return Err(Error::contract(format!(
                "states have {} time nodes but the grid has {}",
                states.shape()[1],
                grid.steps + 1
            )));
        }
        let increments = &states.slice(s![.., 1.., ..]) - &states.slice(s![.., ..-1, ..]);
        Ok(PathBatch {
            grid,
            states,
            increments,
            seed,
            measure,
        })
    }

    pub fn n_paths(&self) -> usize {
        self.states.shape()[0]
    }

    pub fn dim(&self) -> usize {
        self.states.shape()[2]
    }

    /// Keeps every `factor`-th grid node. Exact re-discretisation only for
    /// Brownian motion, whose Euler scheme has no discretisation error.
    pub fn subsample(&self, factor: usize) -> Result<Self> {
        if factor == 0 || !self.grid.steps.is_multiple_of(factor) {
            return Err(Error::contract(format!(
                "cannot subsample {} steps by a factor of {factor}",
                self.grid.steps
            )));
        }
        let grid = TimeGrid::new(self.grid.horizon, self.grid.steps / factor)?;
        let states = self.states.slice(s![.., ..;factor, ..]).to_owned();
        PathBatch::from_states(grid, states, self.seed, self.measure)
    }

    /// Writes the `CHPB` file: magic, `u32` version, `M`, `K`, `d` as `u64`,
    /// then the states in row-major order, all little endian.
    pub fn write_binary<W: Write>(&self, writer: W) -> Result<()> {
        write_tensor(writer, PATHS_MAGIC, self.states.view())
    }

    /// Reads a `CHPB` file. The horizon, seed and measure are not part of the
    /// format and must be supplied by the caller.
    pub fn read_binary<R: Read>(reader: R, horizon: f64, seed: u64, measure: Measure) -> Result<Self> {
        let states = read_tensor(reader, PATHS_MAGIC)?;
        let steps = states.shape()[1].checked_sub(1).filter(|k| *k > 0).ok_or_else(|| {
            Error::Format("path file needs at least two time nodes".into())
        })?;
        PathBatch::from_states(TimeGrid::new(horizon, steps)?, states, seed, measure)
    }
}

pub(crate) const PATHS_MAGIC: &[u8; 4] = b"CHPB";
pub(crate) const BINARY_VERSION: u32 = 1;

/// Writes `magic`, version and the three dimensions of `data` (as `u64`)
/// followed by the row-major little-endian payload.
pub(crate) fn write_tensor<W: Write>(mut writer: W, magic: &[u8; 4], data: ArrayView3<f64>) -> Result<()> {
    let io = |e| Error::io("<binary writer>", e);
    writer.write_all(magic).map_err(io)?;
    writer.write_all(&BINARY_VERSION.to_le_bytes()).map_err(io)?;
    for dim in data.shape() {
        writer.write_all(&(*dim as u64).to_le_bytes()).map_err(io)?;
    }
    let mut buf = Vec::with_capacity(data.len() * 8);
    for v in data.iter() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    writer.write_all(&buf).map_err(io)?;
    writer.flush().map_err(io)
}

pub(crate) fn read_tensor<R: Read>(mut reader: R, magic: &[u8; 4]) -> Result<Array3<f64>> {
    let io = |e| Error::io("<binary reader>", e);
    let mut head = [0u8; 4];
    reader.read_exact(&mut head).map_err(io)?;
    if &head != magic {
        return Err(Error::Format(format!(
            "expected magic {:?}, found {:?}",
            String::from_utf8_lossy(magic),
            String::from_utf8_lossy(&head)
        )));
    }
    let mut word = [0u8; 4];
    reader.read_exact(&mut word).map_err(io)?;
    let version = u32::from_le_bytes(word);
    if version != BINARY_VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let mut dims = [0usize; 3];
    for dim in dims.iter_mut() {
        let mut w = [0u8; 8];
        reader.read_exact(&mut w).map_err(io)?;
        *dim = usize::try_from(u64::from_le_bytes(w))
            .map_err(|_| Error::Format("dimension does not fit in memory".into()))?;
    }
    let len = dims
        .iter()
        .try_fold(1usize, |acc, d| acc.checked_mul(*d))
        .ok_or_else(|| Error::Format("tensor size overflows".into()))?;
    let mut bytes = vec![0u8; len * 8];
    reader.read_exact(&mut bytes).map_err(io)?;
    let data = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    Array3::from_shape_vec(dims, data).map_err(|e| Error::Format(e.to_string()))
}

/// Simulates one path at a time into caller-owned buffers.
///
/// Path `m` draws its normals from substream `m` of the path domain, `d` per
/// step in step order, so `states[m, k]` depends only on the first `k·d`
/// draws of that substream.
pub struct PathSimulator<'a> {
    model: &'a ModelSpec,
    grid: TimeGrid,
    seed: u64,
}

impl<'a> PathSimulator<'a> {
    pub fn new(model: &'a ModelSpec, grid: TimeGrid, seed: u64) -> Self {
        PathSimulator { model, grid, seed }
    }

    /// Fills `states` (row-major `(K+1) × d`) with path `path`.
    pub fn simulate_into(&self, path: usize, states: &mut [f64]) -> Result<()> {
        let d = self.model.dim();
        let k_steps = self.grid.steps;
        debug_assert_eq!(states.len(), (k_steps + 1) * d);
        let dt = self.grid.dt();
        let sqrt_dt = dt.sqrt();
        let mut rng = substream(self.seed, Domain::Paths, path as u64);
        let mut x = self.model.initial_state();
        states[..d].copy_from_slice(&x);

        let mut drift = vec![0.0; d];
        let mut z = vec![0.0; d];
        for k in 0..k_steps {
            for zi in z.iter_mut() {
                *zi = rng.sample(StandardNormal);
            }
            match self.model {
                ModelSpec::BrownianMotion { .. } => {
                    for (xi, zi) in x.iter_mut().zip(&z) {
                        *xi += sqrt_dt * zi;
                    }
                }
                ModelSpec::Cev { .. } | ModelSpec::Polynomial1D { .. } => {
                    self.model.drift_into(&x, &mut drift);
                    let vol = self.model.scalar_variance(x[0]).sqrt();
                    x[0] += drift[0] * dt + vol * sqrt_dt * z[0];
                }
                ModelSpec::AffineMultiD(_) => {
                    self.model.drift_into(&x, &mut drift);
                    let factor = sqrt_psd(self.model.diffusion_matrix(&x)).ok_or_else(|| {
                        Error::Numerical(format!(
                            "eigensolver did not converge on path {path} at step {k}, state {x:?}"
                        ))
                    })?;
                    let shock = factor * DVector::from_column_slice(&z);
                    for i in 0..d {
                        x[i] += drift[i] * dt + shock[i] * sqrt_dt;
                    }
                }
            }
            self.model.truncate_state(&mut x);
            if x.iter().any(|v| !v.is_finite()) {
                return Err(Error::Simulation { path, step: k + 1 });
            }
            states[(k + 1) * d..(k + 2) * d].copy_from_slice(&x);
        }
        Ok(())
    }
}

/// Euler-Maruyama simulation of `n_paths` paths. Under
/// [`Measure::Martingale`] the drift is removed first. The result depends only
/// on the arguments, not on the number of worker threads.
pub fn simulate_paths(
    model: &ModelSpec,
    grid: TimeGrid,
    n_paths: usize,
    seed: u64,
    measure: Measure,
) -> Result<PathBatch> {
    if n_paths == 0 {
        return Err(Error::Config("need at least one path".into()));
    }
    let model = match measure {
        Measure::Physical => model.clone(),
        Measure::Martingale => model.zero_drift(),
    };
    let d = model.dim();
    let mut states = Array3::<f64>::zeros((n_paths, grid.steps + 1, d));
    let sim = PathSimulator::new(&model, grid, seed);
    let outcomes: Vec<Result<()>> = states
        .axis_iter_mut(Axis(0))
        .into_par_iter()
        .enumerate()
        .map(|(m, mut row)| {
            let buf = row.as_slice_mut().expect("standard layout");
            sim.simulate_into(m, buf)
        })
        .collect();
    outcomes.into_iter().collect::<Result<Vec<()>>>()?;
    PathBatch::from_states(grid, states, seed, measure)
}

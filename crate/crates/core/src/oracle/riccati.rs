//! Riccati equations of affine diffusions.
//!
//! For drift `b(x) = β_0 + Σ_k β_k x_k` and diffusion
//! `a(x) = α_0 + Σ_k α_k x_k`,
//! `E[exp(z_1ᵀX_T + z_2 (1/T) ∫_t^T w̄ᵀX_s ds) | X_t = x] = exp(φ(τ) + ψ(τ)ᵀx)`
//! with `τ = T − t` and
//!
//! ```text
//! φ'   = ψᵀβ_0 + ½ ψᵀα_0ψ,                 φ(0) = 0
//! ψ_k' = ψᵀβ_k + ½ ψᵀα_kψ + z_2 w̄_k / T,   ψ(0) = z_1
//! ```
//!
//! The derivatives of `(φ, ψ)` in `z_2` and along a direction of `z_1` solve
//! the linearised system and are integrated alongside with the same RK4 steps.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::models::ModelSpec;

/// Solution at time to maturity `tau`.
#[derive(Debug, Clone, PartialEq)]
pub struct RiccatiSolution {
    pub phi: Complex64,
    pub psi: Vec<Complex64>,
    pub dphi_dz2: Complex64,
    pub dpsi_dz2: Vec<Complex64>,
    /// Derivatives along the requested `z_1` direction (zero when none was
    /// requested).
    pub dphi_dir: Complex64,
    pub dpsi_dir: Vec<Complex64>,
    pub tau: f64,
}

impl RiccatiSolution {
    /// `φ + ψᵀx`.
    pub fn exponent(&self, x: &[f64]) -> Complex64 {
        self.phi + self.psi.iter().zip(x).map(|(p, x)| p * x).sum::<Complex64>()
    }

    /// `exp(φ + ψᵀx)`.
    pub fn transform(&self, x: &[f64]) -> Complex64 {
        self.exponent(x).exp()
    }
}

/// Affine coefficients; `betas[k]` and `alphas[k]` multiply `x_k`.
#[derive(Debug, Clone)]
pub(crate) struct AffineCoeffs {
    pub beta0: Vec<f64>,
    pub betas: Vec<Vec<f64>>,
    pub alpha0: DMatrix<f64>,
    pub alphas: Vec<DMatrix<f64>>,
}

impl AffineCoeffs {
    pub fn from_model(model: &ModelSpec) -> Result<Self> {
        let one = |v: f64| DMatrix::from_element(1, 1, v);
        Ok(match model {
            ModelSpec::BrownianMotion { x0 } => {
                let d = x0.len();
                AffineCoeffs {
                    beta0: vec![0.0; d],
                    betas: vec![vec![0.0; d]; d],
                    alpha0: DMatrix::identity(d, d),
                    alphas: vec![DMatrix::zeros(d, d); d],
                }
            }
            ModelSpec::Cev { alpha, sigma0, .. } => AffineCoeffs {
                beta0: vec![0.0],
                betas: vec![vec![*alpha]],
                alpha0: one(0.0),
                alphas: vec![one(sigma0 * sigma0)],
            },
            ModelSpec::Polynomial1D { beta0, beta1, alpha0, alpha1, alpha2, .. } if *alpha2 == 0.0 => AffineCoeffs {
                beta0: vec![*beta0],
                betas: vec![vec![*beta1]],
                alpha0: one(*alpha0),
                alphas: vec![one(*alpha1)],
            },
            ModelSpec::Polynomial1D { .. } => {
                return Err(Error::Domain("polynomial models with a quadratic diffusion term are not affine".into()))
            }
            ModelSpec::AffineMultiD(p) => AffineCoeffs {
                beta0: p.beta0.as_slice().to_vec(),
                betas: p.beta.iter().map(|b| b.as_slice().to_vec()).collect(),
                alpha0: p.alpha0.clone(),
                alphas: p.alphas.clone(),
            },
        })
    }

    pub fn dim(&self) -> usize {
        self.beta0.len()
    }
}

fn quad_form(a: &DMatrix<f64>, u: &[Complex64], v: &[Complex64]) -> Complex64 {
    let d = u.len();
    let mut acc = Complex64::new(0.0, 0.0);
    for i in 0..d {
        let mut row = Complex64::new(0.0, 0.0);
        for j in 0..d {
            row += v[j] * a[(i, j)];
        }
        acc += u[i] * row;
    }
    acc
}

fn dot(a: &[f64], v: &[Complex64]) -> Complex64 {
    a.iter().zip(v).map(|(a, v)| v * a).sum()
}

/// State layout: `[φ, ψ (d), φ_z2, ψ_z2 (d), φ_dir, ψ_dir (d)]`.
struct System<'a> {
    coeffs: &'a AffineCoeffs,
    z2: Complex64,
    wbar: &'a [f64],
    horizon: f64,
    with_dir: bool,
}

impl System<'_> {
    fn len(&self) -> usize {
        3 * (self.coeffs.dim() + 1)
    }

    fn rhs(&self, s: &[Complex64], out: &mut [Complex64]) {
        let c = self.coeffs;
        let d = c.dim();
        let b = d + 1;
        let psi = &s[1..b];
        let psi_z = &s[b + 1..2 * b];
        let psi_d = &s[2 * b + 1..3 * b];
        out[0] = dot(&c.beta0, psi) + 0.5 * quad_form(&c.alpha0, psi, psi);
        out[b] = dot(&c.beta0, psi_z) + quad_form(&c.alpha0, psi, psi_z);
        out[2 * b] = if self.with_dir {
            dot(&c.beta0, psi_d) + quad_form(&c.alpha0, psi, psi_d)
        } else {
            Complex64::new(0.0, 0.0)
        };
        for k in 0..d {
            let source = self.wbar[k] / self.horizon;
            out[1 + k] = dot(&c.betas[k], psi) + 0.5 * quad_form(&c.alphas[k], psi, psi) + self.z2 * source;
            out[b + 1 + k] = dot(&c.betas[k], psi_z) + quad_form(&c.alphas[k], psi, psi_z) + source;
            out[2 * b + 1 + k] = if self.with_dir {
                dot(&c.betas[k], psi_d) + quad_form(&c.alphas[k], psi, psi_d)
            } else {
                Complex64::new(0.0, 0.0)
            };
        }
    }
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn solve(
    coeffs: &AffineCoeffs,
    z1: &[Complex64],
    z2: Complex64,
    wbar: &[f64],
    direction: Option<&[f64]>,
    tau: f64,
    horizon: f64,
    ode_steps: usize,
) -> Result<RiccatiSolution> {
    let d = coeffs.dim();
    if z1.len() != d || wbar.len() != d || direction.is_some_and(|w| w.len() != d) {
        return Err(Error::contract(format!("Riccati inputs must have dimension {d}")));
    }
    if !(tau >= 0.0 && tau <= horizon && horizon > 0.0) {
        return Err(Error::Domain(format!("need 0 <= tau <= T, got tau={tau}, T={horizon}")));
    }
    if ode_steps == 0 {
        return Err(Error::Config("ode_steps must be positive".into()));
    }
    let sys = System {
        coeffs,
        z2,
        wbar,
        horizon,
        with_dir: direction.is_some(),
    };
    let n = sys.len();
    let b = d + 1;
    let mut s = vec![Complex64::new(0.0, 0.0); n];
    s[1..b].copy_from_slice(z1);
    if let Some(w) = direction {
        for (k, wk) in w.iter().enumerate() {
            s[2 * b + 1 + k] = Complex64::new(*wk, 0.0);
        }
    }
    if tau > 0.0 {
        let h = tau / ode_steps as f64;
        let mut k1 = vec![Complex64::new(0.0, 0.0); n];
        let mut k2 = k1.clone();
        let mut k3 = k1.clone();
        let mut k4 = k1.clone();
        let mut tmp = k1.clone();
        for step in 0..ode_steps {
            sys.rhs(&s, &mut k1);
            for i in 0..n {
                tmp[i] = s[i] + k1[i] * (0.5 * h);
            }
            sys.rhs(&tmp, &mut k2);
            for i in 0..n {
                tmp[i] = s[i] + k2[i] * (0.5 * h);
            }
            sys.rhs(&tmp, &mut k3);
            for i in 0..n {
                tmp[i] = s[i] + k3[i] * h;
            }
            sys.rhs(&tmp, &mut k4);
            for i in 0..n {
                s[i] += (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]) * (h / 6.0);
            }
            if s.iter().any(|v| !(v.re.is_finite() && v.im.is_finite())) {
                return Err(Error::Numerical(format!(
                    "Riccati solution blew up at step {}/{ode_steps} (tau={tau}, z2={z2}); \
                     the transform may not exist at these arguments",
                    step + 1
                )));
            }
        }
    }
    Ok(RiccatiSolution {
        phi: s[0],
        psi: s[1..b].to_vec(),
        dphi_dz2: s[b],
        dpsi_dz2: s[b + 1..2 * b].to_vec(),
        dphi_dir: s[2 * b],
        dpsi_dir: s[2 * b + 1..3 * b].to_vec(),
        tau,
    })
}

/// Transform of `(X_T, (1/T) ∫_t^T Σ_k X_{s,k} ds)` given `X_t`; see the
/// module docs. The drift is used as given, so pricing callers pass a
/// zero-drift model.
pub fn riccati_charfn(
    model: &ModelSpec,
    z1: &[Complex64],
    z2: Complex64,
    tau: f64,
    horizon: f64,
    ode_steps: usize,
) -> Result<RiccatiSolution> {
    let d = model.dim();
    riccati_charfn_with(model, z1, z2, &vec![1.0; d], None, tau, horizon, ode_steps)
}

/// As [`riccati_charfn`] with explicit time-integral weights `w̄` and an
/// optional `z_1` direction for the directional sensitivity.
#[allow(clippy::too_many_arguments)]
pub fn riccati_charfn_with(
    model: &ModelSpec,
    z1: &[Complex64],
    z2: Complex64,
    integral_weights: &[f64],
    direction: Option<&[f64]>,
    tau: f64,
    horizon: f64,
    ode_steps: usize,
) -> Result<RiccatiSolution> {
    let coeffs = AffineCoeffs::from_model(model)?;
    solve(&coeffs, z1, z2, integral_weights, direction, tau, horizon, ode_steps)
}

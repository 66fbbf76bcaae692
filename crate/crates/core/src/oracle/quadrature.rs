//! Quadrature on `[0, U]` for the inversion integrals.
//!
//! Nodes are placed through the substitution `u = U s²`, which clusters them
//! near `u = 0` where characteristic functions carry their mass, and the
//! rule is applied in `s` on `[0, 1]`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum QuadratureRule {
    /// Composite 16-point Gauss-Legendre.
    #[default]
    GaussLegendre,
    /// Composite Simpson.
    Simpson,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSpec {
    /// Truncation point, widened per problem when the integrand decays more
    /// slowly (see the pricers).
    pub u_max: f64,
    pub n_nodes: usize,
    #[serde(default)]
    pub rule: QuadratureRule,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        QuadratureSpec {
            u_max: 200.0,
            n_nodes: 256,
            rule: QuadratureRule::GaussLegendre,
        }
    }
}

/// Nodes and weights of the 16-point Gauss-Legendre rule on `[-1, 1]`
/// (positive half; the rule is symmetric).
const GL16_X: [f64; 8] = [
    0.095_012_509_837_637_44,
    0.281_603_550_779_258_9,
    0.458_016_777_657_227_4,
    0.617_876_244_402_643_8,
    0.755_404_408_355_003,
    0.865_631_202_387_831_7,
    0.944_575_023_073_232_6,
    0.989_400_934_991_649_9,
];
const GL16_W: [f64; 8] = [
    0.189_450_610_455_068_5,
    0.182_603_415_044_923_6,
    0.169_156_519_395_002_5,
    0.149_595_988_816_576_7,
    0.124_628_971_255_533_9,
    0.095_158_511_682_492_78,
    0.062_253_523_938_647_89,
    0.027_152_459_411_754_1,
];

pub const MIN_NODES: usize = 16;

impl QuadratureSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_nodes < MIN_NODES {
            return Err(Error::Config(format!("quadrature needs at least {MIN_NODES} nodes, got {}", self.n_nodes)));
        }
        if !(self.u_max > 0.0 && self.u_max.is_finite()) {
            return Err(Error::Config(format!("quadrature u_max must be positive, got {}", self.u_max)));
        }
        if self.rule == QuadratureRule::GaussLegendre && !self.n_nodes.is_multiple_of(16) {
            return Err(Error::Config(format!(
                "Gauss-Legendre quadrature uses panels of 16 nodes; {} is not a multiple of 16",
                self.n_nodes
            )));
        }
        Ok(())
    }

    /// `(u, weight)` pairs for `∫_0^U f(u) du`. Nodes with zero weight are
    /// dropped.
    pub fn nodes(&self, upper: f64) -> Result<Vec<(f64, f64)>> {
        self.validate()?;
        if !(upper > 0.0 && upper.is_finite()) {
            return Err(Error::Numerical(format!("invalid integration bound {upper}")));
        }
        let in_s: Vec<(f64, f64)> = match self.rule {
            QuadratureRule::GaussLegendre => {
                let panels = self.n_nodes / 16;
                let h = 1.0 / panels as f64;
                let mut out = Vec::with_capacity(self.n_nodes);
                for p in 0..panels {
                    let mid = (p as f64 + 0.5) * h;
                    for (x, w) in GL16_X.iter().zip(&GL16_W) {
                        out.push((mid - 0.5 * h * x, 0.5 * h * w));
                        out.push((mid + 0.5 * h * x, 0.5 * h * w));
                    }
                }
                out
            }
            QuadratureRule::Simpson => {
                let intervals = if self.n_nodes % 2 == 1 { self.n_nodes - 1 } else { self.n_nodes - 2 };
                let h = 1.0 / intervals as f64;
                (0..=intervals)
                    .map(|i| {
                        let c = if i == 0 || i == intervals {
                            1.0
                        } else if i % 2 == 1 {
                            4.0
                        } else {
                            2.0
                        };
                        (i as f64 * h, c * h / 3.0)
                    })
                    .collect()
            }
        };
        Ok(in_s
            .into_iter()
            .map(|(s, w)| (upper * s * s, w * 2.0 * upper * s))
            .filter(|(_, w)| *w > 0.0)
            .collect())
    }

    /// `∫_0^U f(u) du`.
    pub fn integrate(&self, upper: f64, f: impl Fn(f64) -> f64) -> Result<f64> {
        Ok(self.nodes(upper)?.into_iter().map(|(u, w)| w * f(u)).sum())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn gauss_legendre_weights_sum_to_two() {
        assert_relative_eq!(2.0 * GL16_W.iter().sum::<f64>(), 2.0, epsilon = 1e-14);
    }

    #[test]
    fn integrates_smooth_functions() {
        for rule in [QuadratureRule::GaussLegendre, QuadratureRule::Simpson] {
            let spec = QuadratureSpec { u_max: 10.0, n_nodes: 512, rule };
            let v = spec.integrate(10.0, |u| (-u * u / 2.0).exp()).unwrap();
            assert_relative_eq!(v, (std::f64::consts::PI / 2.0).sqrt(), max_relative = 1e-9);
            // u³ becomes a degree-7 polynomial in s: exact for Gauss-Legendre,
            // O(h⁴) for Simpson
            let tol = if rule == QuadratureRule::GaussLegendre { 1e-13 } else { 1e-8 };
            let poly = spec.integrate(2.0, |u| u * u * u).unwrap();
            assert_relative_eq!(poly, 4.0, max_relative = tol);
        }
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(QuadratureSpec { u_max: 1.0, n_nodes: 8, rule: QuadratureRule::Simpson }.validate().is_err());
        assert!(QuadratureSpec { u_max: 1.0, n_nodes: 40, rule: QuadratureRule::GaussLegendre }.validate().is_err());
        assert!(QuadratureSpec { u_max: -1.0, n_nodes: 32, rule: QuadratureRule::GaussLegendre }.validate().is_err());
        assert!(QuadratureSpec::default().nodes(f64::NAN).is_err());
    }
}

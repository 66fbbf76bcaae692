//! Probabilists' Hermite polynomials `h_n` and their time-space harmonic
//! versions `H_n(x, t) = t^{n/2} h_n(x / √t)`.
//!
//! Both are evaluated through the three-term recurrences
//! `h_n = x h_{n-1} - (n-1) h_{n-2}` and
//! `H_n = x H_{n-1} - (n-1) t H_{n-2}`, which also cover `t = 0`
//! (where `H_n(x, 0) = xⁿ`).

use crate::error::{Error, Result};

/// Largest supported order. Generous for double precision at `|x| ≤ 10`.
pub const MAX_ORDER: usize = 60;

/// `H_0..=H_{n_max}` at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct HermiteEval {
    pub x: f64,
    pub t: f64,
    pub values: Vec<f64>,
}

impl HermiteEval {
    pub fn n_max(&self) -> usize {
        self.values.len() - 1
    }
}

fn check_order(n: usize) -> Result<()> {
    if n > MAX_ORDER {
        return Err(Error::Domain(format!(
            "Hermite order {n} exceeds the supported maximum {MAX_ORDER}"
        )));
    }
    Ok(())
}

fn check_time(t: f64) -> Result<()> {
    if t.is_nan() || t < 0.0 {
        return Err(Error::Domain(format!(
            "time argument of H_n must be non-negative, got {t}"
        )));
    }
    Ok(())
}

/// `h_n(x)`.
pub fn probabilists_hermite(n: usize, x: f64) -> Result<f64> {
    check_order(n)?;
    Ok(ts_unchecked(n, x, 1.0))
}

/// `H_n(x, t)` for `t ≥ 0`.
pub fn hermite_ts(n: usize, x: f64, t: f64) -> Result<f64> {
    check_order(n)?;
    check_time(t)?;
    Ok(ts_unchecked(n, x, t))
}

/// `H_0(x,t), ..., H_{n_max}(x,t)` from a single recurrence pass.
pub fn hermite_ts_all(n_max: usize, x: f64, t: f64) -> Result<HermiteEval> {
    check_order(n_max)?;
    check_time(t)?;
    let mut values = Vec::with_capacity(n_max + 1);
    values.push(1.0);
    if n_max >= 1 {
        values.push(x);
    }
    for k in 2..=n_max {
        let next = x * values[k - 1] - (k - 1) as f64 * t * values[k - 2];
        values.push(next);
    }
    Ok(HermiteEval { x, t, values })
}

/// Recurrence without argument checks, for hot loops whose inputs were
/// validated upstream.
#[inline]
pub(crate) fn ts_unchecked(n: usize, x: f64, t: f64) -> f64 {
    match n {
        0 => 1.0,
        1 => x,
        _ => {
            let (mut prev, mut cur) = (1.0, x);
            for k in 2..=n {
                let next = x * cur - (k - 1) as f64 * t * prev;
                prev = cur;
                cur = next;
            }
            cur
        }
    }
}

/// `1 / n!` in double precision.
pub(crate) fn inv_factorial(n: usize) -> f64 {
    (1..=n).fold(1.0, |acc, k| acc / k as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    /// Explicit sum `n! Σ_m (-1)^m x^{n-2m} t^m / (m! (n-2m)! 2^m)`.
    fn closed_form(n: usize, x: f64, t: f64) -> f64 {
        let fact = |k: usize| (1..=k).map(|v| v as f64).product::<f64>();
        (0..=n / 2)
            .map(|m| {
                let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
                sign * fact(n) * x.powi((n - 2 * m) as i32) * t.powi(m as i32)
                    / (fact(m) * fact(n - 2 * m) * 2f64.powi(m as i32))
            })
            .sum()
    }

    #[test]
    fn listed_values() {
        assert_eq!(probabilists_hermite(2, 3.0).unwrap(), 8.0);
        assert_eq!(probabilists_hermite(0, -4.2).unwrap(), 1.0);
        assert_eq!(probabilists_hermite(4, 2.0).unwrap(), -5.0);
        assert_eq!(hermite_ts(2, 1.0, 1.0).unwrap(), 0.0);
        assert_eq!(hermite_ts(3, 2.0, 1.0).unwrap(), 2.0);
        let x = 0.7_f64;
        let t = 2.3_f64;
        let scaled = t.powf(2.5) * probabilists_hermite(5, x / t.sqrt()).unwrap();
        assert_relative_eq!(hermite_ts(5, x, t).unwrap(), scaled, max_relative = 1e-12);
    }

    #[test]
    fn batched_values() {
        assert_eq!(hermite_ts_all(0, 3.0, 1.0).unwrap().values, vec![1.0]);
        let all = hermite_ts_all(4, 2.0, 1.0).unwrap();
        assert_eq!(all.values, vec![1.0, 2.0, 3.0, 2.0, -5.0]);
        for (n, v) in all.values.iter().enumerate() {
            assert_eq!(*v, hermite_ts(n, 2.0, 1.0).unwrap());
        }
        let x = -1.3;
        assert_eq!(hermite_ts_all(3, x, 0.0).unwrap().values, vec![1.0, x, x * x, x * x * x]);
    }

    #[test]
    fn domain_errors() {
        assert!(matches!(hermite_ts(2, 1.0, -0.1), Err(Error::Domain(_))));
        assert!(matches!(probabilists_hermite(61, 1.0), Err(Error::Domain(_))));
        assert!(matches!(hermite_ts_all(3, 1.0, f64::NAN), Err(Error::Domain(_))));
        assert!(probabilists_hermite(60, 10.0).unwrap().is_finite());
    }

    #[test]
    fn matches_closed_form_up_to_order_eight() {
        for n in 0..=8 {
            for &(x, t) in &[(0.3, 0.5), (-2.1, 1.7), (1.0, 0.0), (4.0, 3.0)] {
                assert_relative_eq!(
                    hermite_ts(n, x, t).unwrap(),
                    closed_form(n, x, t),
                    max_relative = 1e-12,
                    epsilon = 1e-12
                );
            }
        }
    }

    proptest! {
        #[test]
        fn heat_equation_holds(n in 2usize..10, x in -3.0f64..3.0, t in 0.1f64..4.0) {
            // ½ ∂²ₓ H_n + ∂ₜ H_n = 0 via the derivative identities
            let second = (n * (n - 1)) as f64 * ts_unchecked(n - 2, x, t);
            let dt = -((n * (n - 1)) as f64) / 2.0 * ts_unchecked(n - 2, x, t);
            prop_assert!((0.5 * second + dt).abs() < 1e-12);
            let h = 1e-4;
            let fd_t = (ts_unchecked(n, x, t + h) - ts_unchecked(n, x, t - h)) / (2.0 * h);
            prop_assert!((fd_t - dt).abs() < 1e-5 * (1.0 + dt.abs()));
        }
    }
}

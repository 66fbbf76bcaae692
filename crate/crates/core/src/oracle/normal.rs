use crate::error::{Error, Result};

/// `Φ(x) = erfc(-x/√2) / 2`, using the libm `erfc` (a rational
/// approximation accurate to a few ulps), so the absolute error is far below
/// `1e-10` on the whole line.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Delta `Φ((x − K)/√(T − t))` of a call on Brownian motion. At `t = T` it
/// is the indicator `1{x ≥ K}`.
pub fn bm_call_delta(x: f64, t: f64, strike: f64, horizon: f64) -> Result<f64> {
    if !(t >= 0.0 && t <= horizon) {
        return Err(Error::Domain(format!("call delta needs 0 <= t <= T, got t={t}, T={horizon}")));
    }
    if t == horizon {
        return Ok(if x >= strike { 1.0 } else { 0.0 });
    }
    Ok(normal_cdf((x - strike) / (horizon - t).sqrt()))
}

/// `E[max(X_T − K, 0) | X_t = x]` for Brownian motion.
pub fn bm_call_price(x: f64, t: f64, strike: f64, horizon: f64) -> Result<f64> {
    if !(t >= 0.0 && t <= horizon) {
        return Err(Error::Domain(format!("call price needs 0 <= t <= T, got t={t}, T={horizon}")));
    }
    let s = (horizon - t).sqrt();
    if s == 0.0 {
        return Ok((x - strike).max(0.0));
    }
    let z = (x - strike) / s;
    let density = (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
    Ok(s * density + (x - strike) * normal_cdf(z))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    /// `Φ(x) = 1/2 + φ(x) Σ x^{2k+1} / (2k+1)!!`, summed to convergence.
    fn series_cdf(x: f64) -> f64 {
        let mut term = x;
        let mut sum = x;
        let mut k = 1.0;
        while term.abs() > 1e-18 * sum.abs() {
            term *= x * x / (2.0 * k + 1.0);
            sum += term;
            k += 1.0;
        }
        0.5 + sum * (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
    }

    #[test]
    fn cdf_examples() {
        assert_eq!(normal_cdf(0.0), 0.5);
        for x in [0.5, 1.0, 3.0] {
            assert_relative_eq!(normal_cdf(-x) + normal_cdf(x), 1.0, epsilon = 1e-15);
        }
        assert!((normal_cdf(1.96) - 0.975_002_104_851_780).abs() < 1e-12);
        for x in [-4.0, -1.3, -0.2, 0.7, 1.96, 2.5, 5.0] {
            assert!((normal_cdf(x) - series_cdf(x)).abs() < 1e-13, "x = {x}");
        }
    }

    #[test]
    fn delta_examples() {
        assert_eq!(bm_call_delta(0.3, 0.2, 0.3, 1.0).unwrap(), 0.5);
        assert!(bm_call_delta(50.0, 0.0, 0.0, 1.0).unwrap() > 1.0 - 1e-15);
        assert_relative_eq!(bm_call_delta(0.0, 0.0, -0.5, 1.0).unwrap(), series_cdf(0.5), epsilon = 1e-13);
        assert_relative_eq!(bm_call_delta(0.0, 0.0, -0.5, 1.0).unwrap(), 0.691_462_461_274_013, epsilon = 1e-12);
        assert_eq!(bm_call_delta(-0.4, 1.0, -0.5, 1.0).unwrap(), 1.0);
        assert_eq!(bm_call_delta(-0.6, 1.0, -0.5, 1.0).unwrap(), 0.0);
        assert!(matches!(bm_call_delta(0.0, 1.2, 0.0, 1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn price_derivative_is_delta() {
        let h = 1e-5;
        for x in [-1.0, -0.5, 0.2] {
            let fd = (bm_call_price(x + h, 0.3, -0.5, 1.0).unwrap() - bm_call_price(x - h, 0.3, -0.5, 1.0).unwrap()) / (2.0 * h);
            assert_relative_eq!(fd, bm_call_delta(x, 0.3, -0.5, 1.0).unwrap(), epsilon = 1e-8);
        }
    }
}

//! Reference prices and hedges used to judge the learned strategies.
//!
//! * [`normal`]: the standard normal CDF and the Brownian call delta.
//! * [`riccati`]: characteristic functions of affine models (with a running
//!   time integral) from their Riccati equations, plus sensitivities.
//! * [`quadrature`]: truncated Fourier-inversion integrals.
//! * [`fourier`]: Asian and basket put values and deltas by inversion.
//! * [`mc`]: plain Monte Carlo prices.

pub mod fourier;
pub mod mc;
pub mod normal;
pub mod quadrature;
pub mod riccati;

pub use fourier::{asian_put_value_delta, basket_put_value_delta, AsianPutPricer, BasketPutPricer};
pub use mc::{mc_reference_price, PathPayoff};
pub use normal::{bm_call_delta, bm_call_price, normal_cdf};
pub use quadrature::{QuadratureRule, QuadratureSpec};
pub use riccati::{riccati_charfn, riccati_charfn_with, RiccatiSolution};

//! Chaotic hedging: learn a derivative payoff as a truncated chaos expansion
//! in iterated stochastic integrals of random neural features, and read the
//! replicating strategy off the fitted expansion in closed form.
//!
//! Pipeline:
//!
//! 1. [`models`] simulates Euler-Maruyama paths of a diffusion.
//! 2. [`features`] samples random sigmoid neurons and integrates them along
//!    each path (stochastic integral `W` and quadratic variation `Q`).
//! 3. [`chaos`] turns `(W, Q)` into iterated integrals through the
//!    time-space harmonic Hermite polynomials of [`hermite`].
//! 4. [`regression`] fits the readout by (ridge-stabilised) least squares.
//! 5. [`chaos::hedging_strategy`] returns the hedge of the fitted payoff.
//!
//! [`oracle`] supplies reference prices and deltas (analytic, Riccati +
//! Fourier inversion, Monte Carlo) and [`harness`] wires everything into
//! reproducible experiments.

pub mod chaos;
pub mod error;
pub mod features;
pub mod harness;
pub mod hermite;
pub mod models;
pub mod oracle;
pub mod regression;
pub mod rng;

pub use error::{Error, Result};

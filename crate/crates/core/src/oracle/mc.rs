use ndarray::ArrayView2;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::models::{ModelSpec, PathSimulator, TimeGrid};

/// A functional of one simulated path (`(K+1) × d` states).
pub trait PathPayoff: Sync {
    fn value(&self, path: ArrayView2<f64>, grid: &TimeGrid) -> f64;
}

impl<F> PathPayoff for F
where
    F: Fn(ArrayView2<f64>, &TimeGrid) -> f64 + Sync,
{
    fn value(&self, path: ArrayView2<f64>, grid: &TimeGrid) -> f64 {
        self(path, grid)
    }
}

/// Sample mean and standard error of `payoff` over `n_paths` fresh paths of
/// `model` (used as given; pass a zero-drift model for prices under the
/// martingale measure). Paths are generated one at a time, so memory does
/// not grow with `n_paths`. Re-using `seed` with a shifted initial state
/// gives common-random-number bumps.
pub fn mc_reference_price<P: PathPayoff + ?Sized>(
    model: &ModelSpec,
    payoff: &P,
    n_paths: usize,
    grid: TimeGrid,
    seed: u64,
) -> Result<(f64, f64)> {
    if n_paths < 2 {
        return Err(Error::Config("Monte Carlo pricing needs at least two paths".into()));
    }
    let d = model.dim();
    let sim = PathSimulator::new(model, grid, seed);
    let values: Vec<f64> = (0..n_paths)
        .into_par_iter()
        .map_init(
            || vec![0.0; (grid.steps + 1) * d],
            |buf, m| {
                sim.simulate_into(m, buf)?;
                let view = ArrayView2::from_shape((grid.steps + 1, d), buf.as_slice()).expect("buffer shape");
                Ok(payoff.value(view, &grid))
            },
        )
        .collect::<Result<_>>()?;
    let n = n_paths as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    Ok((mean, (var / n).sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::normal::bm_call_price;

    #[test]
    fn constant_payoff_has_no_error() {
        let model = ModelSpec::brownian(vec![0.0]).unwrap();
        let (p, se) = mc_reference_price(&model, &|_: ArrayView2<f64>, _: &TimeGrid| 7.0, 100, TimeGrid::new(1.0, 5).unwrap(), 1).unwrap();
        assert_eq!((p, se), (7.0, 0.0));
    }

    #[test]
    fn brownian_call_matches_closed_form() {
        let model = ModelSpec::brownian(vec![0.0]).unwrap();
        let grid = TimeGrid::new(1.0, 4).unwrap();
        let call = |path: ArrayView2<f64>, g: &TimeGrid| (path[[g.steps, 0]] + 0.5).max(0.0);
        let (p, se) = mc_reference_price(&model, &call, 100_000, grid, 3).unwrap();
        let exact = bm_call_price(0.0, 0.0, -0.5, 1.0).unwrap();
        let closed = (1.0 / (2.0 * std::f64::consts::PI)).sqrt() * (-0.125f64).exp() + 0.5 * crate::oracle::normal_cdf(0.5);
        approx::assert_relative_eq!(exact, closed, epsilon = 1e-14);
        assert!((p - exact).abs() < 3.0 * se, "{p} vs {exact} (se {se})");
    }

    #[test]
    fn bumped_start_reuses_normals() {
        let model = ModelSpec::brownian(vec![0.0]).unwrap();
        let bumped = model.with_initial_state(&[0.25]).unwrap();
        let grid = TimeGrid::new(1.0, 10).unwrap();
        let terminal = |path: ArrayView2<f64>, g: &TimeGrid| path[[g.steps, 0]];
        let (a, _) = mc_reference_price(&model, &terminal, 50, grid, 9).unwrap();
        let (b, _) = mc_reference_price(&bumped, &terminal, 50, grid, 9).unwrap();
        approx::assert_relative_eq!(b - a, 0.25, epsilon = 1e-12);
    }
}

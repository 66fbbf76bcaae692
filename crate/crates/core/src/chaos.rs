//! Chaos expansion of a payoff in random-neuron iterated integrals.
//!
//! With the Kailath-Segall identity the `n`-fold iterated integral of a
//! diagonal integrand is `J_n(φ^{⊗n})_t = H_n(W(φ)_t, Q(φ)_t) / n!`. The
//! approximating claim is `G = w_0 + Σ_n Σ_j w_{n,j} J_n(φ_{n,j})_T` and its
//! replicating strategy is
//! `θ^i_t = Σ_n 1/(n-1)! Σ_j w_{n,j} H_{n-1}(W_t, Q_t) φ_{n,j,i}(t)`.

use std::ops::Range;

use nalgebra::DMatrix;
use ndarray::{Array3, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{walk_path, ActivationKind, FeatureBank, NeuronPathIntegrals, PhiTable, RandomNeuron, TerminalIntegrals};
use crate::hermite::{inv_factorial, ts_unchecked, MAX_ORDER};
use crate::models::{ModelSpec, PathBatch, TimeGrid};
use crate::regression::RowSource;

/// Meaning of one regression column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Column {
    Intercept,
    /// Neuron `index` (0-based) of chaos order `order`.
    Neuron { order: usize, index: usize },
}

/// Column layout for orders `0..=order`: intercept, then order 1 neurons,
/// order 2 neurons, and so on.
pub fn column_index(bank: &FeatureBank, order: usize) -> Vec<Column> {
    let mut cols = vec![Column::Intercept];
    for (i, neurons) in bank.orders.iter().take(order).enumerate() {
        cols.extend((0..neurons.len()).map(|index| Column::Neuron { order: i + 1, index }));
    }
    cols
}

/// Regressors `J_n(φ_{n,j})_T` of every path, intercept first.
#[derive(Debug, Clone, PartialEq)]
pub struct ChaosDesign {
    /// `M × P`
    pub regressors: DMatrix<f64>,
    pub column_index: Vec<Column>,
}

impl ChaosDesign {
    pub fn n_rows(&self) -> usize {
        self.regressors.nrows()
    }

    pub fn n_cols(&self) -> usize {
        self.regressors.ncols()
    }

    /// The first `n_cols` columns, i.e. the design of a lower maximal order.
    pub fn prefix(&self, n_cols: usize) -> Result<ChaosDesign> {
        if n_cols == 0 || n_cols > self.n_cols() {
            return Err(Error::contract(format!(
                "cannot take {n_cols} of {} columns",
                self.n_cols()
            )));
        }
        Ok(ChaosDesign {
            regressors: self.regressors.columns(0, n_cols).into_owned(),
            column_index: self.column_index[..n_cols].to_vec(),
        })
    }

    pub fn rows(&self, rows: Range<usize>) -> Result<ChaosDesign> {
        if rows.end > self.n_rows() || rows.start > rows.end {
            return Err(Error::contract(format!(
                "row range {rows:?} outside a design with {} rows",
                self.n_rows()
            )));
        }
        Ok(ChaosDesign {
            regressors: self.regressors.rows(rows.start, rows.len()).into_owned(),
            column_index: self.column_index.clone(),
        })
    }
}

impl RowSource for ChaosDesign {
    fn n_rows(&self) -> usize {
        self.regressors.nrows()
    }

    fn n_cols(&self) -> usize {
        self.regressors.ncols()
    }

    fn fill_rows(&self, rows: Range<usize>, out: &mut DMatrix<f64>) -> Result<()> {
        out.copy_from(&self.regressors.rows(rows.start, rows.len()));
        Ok(())
    }
}

fn check_order(n: usize) -> Result<()> {
    if n > MAX_ORDER {
        return Err(Error::Domain(format!("chaos order {n} exceeds {MAX_ORDER}")));
    }
    Ok(())
}

/// `H_n(W_k, Q_k) / n!` pointwise.
pub fn iterated_integral_hermite(w: &[f64], q: &[f64], n: usize) -> Result<Vec<f64>> {
    if w.len() != q.len() {
        return Err(Error::contract(format!("W has length {} but Q has {}", w.len(), q.len())));
    }
    check_order(n)?;
    let scale = inv_factorial(n);
    Ok(w.iter().zip(q).map(|(w, q)| ts_unchecked(n, *w, *q) * scale).collect())
}

/// Brute-force iterated sum `P^n[k] = Σ_{j<k} P^{n-1}[j] φ(t_j)ᵀ ΔX_j`,
/// `P^0 ≡ 1`, along path `path` of `paths`.
pub fn iterated_integral_direct(
    neuron: &RandomNeuron,
    activation: ActivationKind,
    paths: &PathBatch,
    path: usize,
    n: usize,
) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::Domain("direct iterated integrals need n >= 1".into()));
    }
    check_order(n)?;
    if path >= paths.n_paths() {
        return Err(Error::contract(format!("path {path} out of {}", paths.n_paths())));
    }
    if neuron.dim() != paths.dim() {
        return Err(Error::contract("neuron and path dimensions differ"));
    }
    let steps = paths.grid.steps;
    let incr = paths.increments.index_axis(Axis(0), path);
    let mut phi = vec![0.0; neuron.dim()];
    let dots: Vec<f64> = (0..steps)
        .map(|k| {
            neuron.value_into(activation, paths.grid.time(k), &mut phi);
            phi.iter().zip(incr.row(k)).map(|(a, b)| a * b).sum()
        })
        .collect();
    let mut prev = vec![1.0; steps + 1];
    for _ in 0..n {
        let mut cur = vec![0.0; steps + 1];
        for k in 0..steps {
            cur[k + 1] = cur[k] + prev[k] * dots[k];
        }
        prev = cur;
    }
    Ok(prev)
}

fn check_integrals(bank: &FeatureBank, order: usize, n_neurons: usize) -> Result<()> {
    if order > bank.max_order() {
        return Err(Error::contract(format!(
            "order {order} exceeds the bank's maximal order {}",
            bank.max_order()
        )));
    }
    let needed = bank.neurons_up_to(order);
    if n_neurons < needed {
        return Err(Error::contract(format!(
            "design assembly needs integrals for {needed} neurons, got {n_neurons}"
        )));
    }
    Ok(())
}

/// Writes `[1, H_n(W_T, Q_T)/n!, ...]` rows into `out`.
fn fill_from_terminal(bank: &FeatureBank, order: usize, ints: &TerminalIntegrals, out: &mut DMatrix<f64>) {
    let orders: Vec<usize> = bank.iter_up_to(order).map(|(n, _)| n).collect();
    for r in 0..ints.w.nrows() {
        out[(r, 0)] = 1.0;
        for (j, &n) in orders.iter().enumerate() {
            out[(r, j + 1)] = ts_unchecked(n, ints.w[[r, j]], ints.q[[r, j]]) * inv_factorial(n);
        }
    }
}

/// Design for orders `0..=order` from terminal integrals in bank order.
pub fn build_design(bank: &FeatureBank, order: usize, integrals: &TerminalIntegrals) -> Result<ChaosDesign> {
    check_integrals(bank, order, integrals.n_neurons())?;
    let m = integrals.w.nrows();
    let mut regressors = DMatrix::zeros(m, bank.n_columns(order));
    fill_from_terminal(bank, order, integrals, &mut regressors);
    if regressors.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite regressor in chaos design".into()));
    }
    Ok(ChaosDesign {
        regressors,
        column_index: column_index(bank, order),
    })
}

/// Design rows computed on demand from the paths, so that the full `M × P`
/// matrix never has to be stored.
pub struct ChaosRows<'a> {
    pub bank: &'a FeatureBank,
    pub order: usize,
    pub paths: &'a PathBatch,
    pub model: &'a ModelSpec,
    /// Row `r` of the source is path `path_offset + r`.
    pub path_offset: usize,
    pub n_rows: usize,
}

impl<'a> ChaosRows<'a> {
    pub fn new(
        bank: &'a FeatureBank,
        order: usize,
        paths: &'a PathBatch,
        model: &'a ModelSpec,
        path_range: Range<usize>,
    ) -> Result<Self> {
        check_integrals(bank, order, bank.total_neurons())?;
        if path_range.end > paths.n_paths() || path_range.start > path_range.end {
            return Err(Error::contract(format!(
                "path range {path_range:?} outside {} paths",
                paths.n_paths()
            )));
        }
        Ok(ChaosRows {
            bank,
            order,
            paths,
            model,
            path_offset: path_range.start,
            n_rows: path_range.len(),
        })
    }
}

impl RowSource for ChaosRows<'_> {
    fn n_rows(&self) -> usize {
        self.n_rows
    }

    fn n_cols(&self) -> usize {
        self.bank.n_columns(self.order)
    }

    fn fill_rows(&self, rows: Range<usize>, out: &mut DMatrix<f64>) -> Result<()> {
        let paths = (rows.start + self.path_offset)..(rows.end + self.path_offset);
        let ints = TerminalIntegrals::compute_range(self.bank, self.order, self.paths, self.model, paths)?;
        fill_from_terminal(self.bank, self.order, &ints, out);
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("non-finite regressor in chaos design".into()));
        }
        Ok(())
    }
}

/// `design · weights`.
pub fn synthesize_payoff(design: &ChaosDesign, weights: &[f64]) -> Result<Vec<f64>> {
    if weights.len() != design.n_cols() {
        return Err(Error::contract(format!(
            "{} weights for {} columns",
            weights.len(),
            design.n_cols()
        )));
    }
    let w = nalgebra::DVector::from_column_slice(weights);
    Ok((&design.regressors * w).as_slice().to_vec())
}

/// Hedging strategy `θ` on selected paths and grid nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct HedgePaths {
    /// `paths × times × d`
    pub theta: Array3<f64>,
    /// Path index in the batch of every row.
    pub path_ids: Vec<usize>,
    /// Grid node of every time slot, strictly increasing.
    pub time_ids: Vec<usize>,
    pub grid: TimeGrid,
}

impl HedgePaths {
    pub fn zeros(path_ids: Vec<usize>, time_ids: Vec<usize>, dim: usize, grid: TimeGrid) -> Self {
        HedgePaths {
            theta: Array3::zeros((path_ids.len(), time_ids.len(), dim)),
            path_ids,
            time_ids,
            grid,
        }
    }

    pub fn dim(&self) -> usize {
        self.theta.shape()[2]
    }

    pub fn covers_full_grid(&self) -> bool {
        self.time_ids.len() == self.grid.steps + 1 && self.time_ids.iter().enumerate().all(|(i, k)| i == *k)
    }
}

/// Per-neuron hedge coefficients `w_{n,j} / (n-1)!` and orders, in bank
/// order, for a weight vector covering orders `0..=order`.
fn hedge_coefficients(bank: &FeatureBank, weights: &[f64]) -> Result<(usize, Vec<(usize, f64)>)> {
    let order = bank.order_for_columns(weights.len()).ok_or_else(|| {
        Error::contract(format!(
            "{} weights do not match any order of a bank with sizes {:?}",
            weights.len(),
            bank.sizes()
        ))
    })?;
    let coeffs = bank
        .iter_up_to(order)
        .zip(&weights[1..])
        .map(|((n, _), w)| (n, w * inv_factorial(n - 1)))
        .collect();
    Ok((order, coeffs))
}

#[inline]
fn accumulate_theta(coeffs: &[(usize, f64)], phi: &[f64], w: &[f64], q: &[f64], out: &mut [f64]) {
    let d = out.len();
    out.iter_mut().for_each(|v| *v = 0.0);
    for (j, &(n, c)) in coeffs.iter().enumerate() {
        if c == 0.0 {
            continue;
        }
        let scale = c * ts_unchecked(n - 1, w[j], q[j]);
        for (o, p) in out.iter_mut().zip(&phi[j * d..(j + 1) * d]) {
            *o += scale * p;
        }
    }
}

/// Closed-form hedge on every path and node from stored `W`/`Q` paths of the
/// neurons of orders `1..=N`, where `N` follows from the weight count.
pub fn hedging_strategy(
    bank: &FeatureBank,
    weights: &[f64],
    integrals: &[NeuronPathIntegrals],
    grid: &TimeGrid,
) -> Result<HedgePaths> {
    let (order, coeffs) = hedge_coefficients(bank, weights)?;
    check_integrals(bank, order, integrals.len())?;
    let m = integrals.first().map_or(0, |i| i.w.nrows());
    let nodes = grid.steps + 1;
    if integrals[..coeffs.len()].iter().any(|i| i.w.dim() != (m, nodes) || i.q.dim() != (m, nodes)) {
        return Err(Error::contract("integrals do not match the grid"));
    }
    let d = bank.dim;
    let phi = PhiTable::new(bank.iter_up_to(order).map(|(_, n)| n), bank.activation, grid, d);
    let mut out = HedgePaths::zeros((0..m).collect(), (0..nodes).collect(), d, *grid);
    let n = coeffs.len();
    out.theta
        .axis_iter_mut(Axis(0))
        .into_par_iter()
        .enumerate()
        .for_each(|(p, mut rows)| {
            let mut w = vec![0.0; n];
            let mut q = vec![0.0; n];
            let mut theta = vec![0.0; d];
            for k in 0..nodes {
                for j in 0..n {
                    w[j] = integrals[j].w[[p, k]];
                    q[j] = integrals[j].q[[p, k]];
                }
                accumulate_theta(&coeffs, phi.at(k), &w, &q, &mut theta);
                for (i, v) in theta.iter().enumerate() {
                    rows[[k, i]] = *v;
                }
            }
        });
    Ok(out)
}

/// Closed-form hedge computed while walking the selected paths, without
/// storing `W`/`Q` for all neurons.
pub fn hedge_along_paths(
    bank: &FeatureBank,
    weights: &[f64],
    paths: &PathBatch,
    model: &ModelSpec,
    path_ids: &[usize],
    time_ids: &[usize],
) -> Result<HedgePaths> {
    let (order, coeffs) = hedge_coefficients(bank, weights)?;
    let grid = paths.grid;
    if path_ids.iter().any(|p| *p >= paths.n_paths()) {
        return Err(Error::contract("hedge path id out of range"));
    }
    if time_ids.windows(2).any(|w| w[0] >= w[1]) || time_ids.last().is_some_and(|k| *k > grid.steps) {
        return Err(Error::contract("hedge time ids must be increasing grid nodes"));
    }
    if bank.dim != paths.dim() || model.dim() != paths.dim() {
        return Err(Error::contract("bank, model and path dimensions differ"));
    }
    let d = bank.dim;
    let phi = PhiTable::new(bank.iter_up_to(order).map(|(_, n)| n), bank.activation, &grid, d);
    let mut slot = vec![usize::MAX; grid.steps + 1];
    for (s, k) in time_ids.iter().enumerate() {
        slot[*k] = s;
    }
    let mut out = HedgePaths::zeros(path_ids.to_vec(), time_ids.to_vec(), d, grid);
    out.theta
        .axis_iter_mut(Axis(0))
        .into_par_iter()
        .zip(path_ids.par_iter())
        .for_each(|(mut rows, &p)| {
            let mut theta = vec![0.0; d];
            walk_path(
                &phi,
                paths.states.index_axis(Axis(0), p),
                paths.increments.index_axis(Axis(0), p),
                model,
                &grid,
                |k, w, q| {
                    let s = slot[k];
                    if s != usize::MAX {
                        accumulate_theta(&coeffs, phi.at(k), w, q, &mut theta);
                        for (i, v) in theta.iter().enumerate() {
                            rows[[s, i]] = *v;
                        }
                    }
                },
            );
        });
    Ok(out)
}

/// `φ_0 + Σ_{k<K} θ_{t_k}ᵀ ΔX_k − target` per hedged path. `target[r]`
/// belongs to row `r` of `theta`.
pub fn replication_gap(phi0: f64, theta: &HedgePaths, paths: &PathBatch, target: &[f64]) -> Result<Vec<f64>> {
    if !theta.covers_full_grid() || theta.grid != paths.grid {
        return Err(Error::contract("replication needs the hedge on every node of the path grid"));
    }
    if target.len() != theta.path_ids.len() {
        return Err(Error::contract(format!(
            "{} targets for {} hedged paths",
            target.len(),
            theta.path_ids.len()
        )));
    }
    if theta.dim() != paths.dim() || theta.path_ids.iter().any(|p| *p >= paths.n_paths()) {
        return Err(Error::contract("hedge does not match the path batch"));
    }
    let steps = paths.grid.steps;
    Ok(theta
        .path_ids
        .iter()
        .enumerate()
        .map(|(r, &p)| {
            let mut value = phi0;
            for k in 0..steps {
                for i in 0..theta.dim() {
                    value += theta.theta[[r, k, i]] * paths.increments[[p, k, i]];
                }
            }
            value - target[r]
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{sample_feature_bank, InitSpec};
    use crate::models::{simulate_paths, Measure};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn bm_setup(m: usize, k: usize, sizes: &[usize]) -> (ModelSpec, PathBatch, FeatureBank) {
        let model = ModelSpec::brownian(vec![0.0]).unwrap();
        let paths = simulate_paths(&model, TimeGrid::new(1.0, k).unwrap(), m, 3, Measure::Physical).unwrap();
        let bank = sample_feature_bank(sizes.len(), sizes, 1, ActivationKind::Sigmoid, &InitSpec::default(), 5).unwrap();
        (model, paths, bank)
    }

    fn all_integrals(bank: &FeatureBank, order: usize, paths: &PathBatch, model: &ModelSpec) -> Vec<NeuronPathIntegrals> {
        bank.iter_up_to(order)
            .map(|(_, n)| NeuronPathIntegrals::compute(n, bank.activation, paths, model).unwrap())
            .collect()
    }

    #[test]
    fn hermite_integral_examples() {
        let w = [0.0, 0.5, -1.2, 2.0];
        let q = [0.0, 0.1, 0.3, 0.7];
        assert_eq!(iterated_integral_hermite(&w, &q, 0).unwrap(), vec![1.0; 4]);
        assert_eq!(iterated_integral_hermite(&w, &q, 1).unwrap(), w.to_vec());
        let two = iterated_integral_hermite(&w, &q, 2).unwrap();
        for k in 0..4 {
            assert_relative_eq!(two[k], (w[k] * w[k] - q[k]) / 2.0, epsilon = 1e-15);
        }
        assert!(iterated_integral_hermite(&w, &q[..3], 2).is_err());
    }

    #[test]
    fn direct_integral_examples() {
        let (model, paths, bank) = bm_setup(3, 40, &[1]);
        let neuron = &bank.orders[0][0];
        let w = crate::features::compute_w(neuron, bank.activation, &paths).unwrap();
        let one = iterated_integral_direct(neuron, bank.activation, &paths, 1, 1).unwrap();
        for k in 0..=40 {
            assert_relative_eq!(one[k], w[[1, k]], epsilon = 1e-13);
        }
        let _ = model;

        let grid = TimeGrid::new(1.0, 5).unwrap();
        let flat = PathBatch::from_states(grid, Array3::from_elem((1, 6, 1), 2.0), 0, Measure::Physical).unwrap();
        for n in 1..4 {
            assert!(iterated_integral_direct(neuron, bank.activation, &flat, 0, n).unwrap().iter().all(|v| *v == 0.0));
        }
        assert!(iterated_integral_direct(neuron, bank.activation, &flat, 0, 0).is_err());
    }

    #[test]
    fn direct_second_order_approaches_closed_form() {
        let grid = TimeGrid::new(1.0, 4000).unwrap();
        let paths = simulate_paths(&ModelSpec::brownian(vec![0.0]).unwrap(), grid, 20, 11, Measure::Physical).unwrap();
        let one = RandomNeuron { a: vec![0.0], b: vec![1.0] };
        let mut err = 0.0;
        for p in 0..20 {
            let direct = iterated_integral_direct(&one, ActivationKind::Relu, &paths, p, 2).unwrap();
            let x = paths.states[[p, 4000, 0]];
            err += (direct[4000] - (x * x - 1.0) / 2.0).powi(2);
        }
        // E[(ΣΔ² - T)²/4] = T²/(2K)
        assert!((err / 20.0).sqrt() < 5.0 * (1.0 / 8000.0f64).sqrt());
    }

    #[test]
    fn design_shapes() {
        let (model, paths, bank) = bm_setup(30, 20, &[1, 1]);
        let ints = TerminalIntegrals::compute(&bank, 2, &paths, &model).unwrap();
        let d0 = build_design(&bank, 0, &ints).unwrap();
        assert_eq!(d0.n_cols(), 1);
        assert!(d0.regressors.iter().all(|v| *v == 1.0));
        let d2 = build_design(&bank, 2, &ints).unwrap();
        assert_eq!(d2.n_cols(), 3);
        assert_eq!(
            d2.column_index,
            vec![Column::Intercept, Column::Neuron { order: 1, index: 0 }, Column::Neuron { order: 2, index: 0 }]
        );
        for r in 0..30 {
            assert_eq!(d2.regressors[(r, 1)], ints.w[[r, 0]]);
            assert_relative_eq!(d2.regressors[(r, 2)], (ints.w[[r, 1]].powi(2) - ints.q[[r, 1]]) / 2.0, epsilon = 1e-14);
        }
        assert_eq!(d2.prefix(1).unwrap(), d0);

        let big = sample_feature_bank(6, &[50; 6], 1, ActivationKind::Sigmoid, &InitSpec::default(), 7).unwrap();
        assert_eq!(column_index(&big, 6).len(), 301);

        let short = TerminalIntegrals { w: ints.w.slice(ndarray::s![.., ..1]).to_owned(), q: ints.q.slice(ndarray::s![.., ..1]).to_owned() };
        assert!(matches!(build_design(&bank, 2, &short), Err(Error::Contract(_))));
    }

    #[test]
    fn lazy_rows_match_design() {
        let (model, paths, bank) = bm_setup(25, 15, &[2, 3]);
        let ints = TerminalIntegrals::compute(&bank, 2, &paths, &model).unwrap();
        let design = build_design(&bank, 2, &ints).unwrap();
        let lazy = ChaosRows::new(&bank, 2, &paths, &model, 5..25).unwrap();
        let mut out = DMatrix::zeros(7, 6);
        lazy.fill_rows(3..10, &mut out).unwrap();
        assert_eq!(out, design.regressors.rows(8, 7).into_owned());
    }

    #[test]
    fn synthesize_examples() {
        let (model, paths, bank) = bm_setup(10, 10, &[2]);
        let design = build_design(&bank, 1, &TerminalIntegrals::compute(&bank, 1, &paths, &model).unwrap()).unwrap();
        assert_eq!(synthesize_payoff(&design, &[3.0, 0.0, 0.0]).unwrap(), vec![3.0; 10]);
        assert_eq!(synthesize_payoff(&design, &[0.0; 3]).unwrap(), vec![0.0; 10]);
        assert!(synthesize_payoff(&design, &[0.0; 2]).is_err());
    }

    #[test]
    fn hedge_examples() {
        let (model, paths, bank) = bm_setup(6, 12, &[1, 1]);
        let ints = all_integrals(&bank, 2, &paths, &model);
        let zero = hedging_strategy(&bank, &[1.0, 0.0, 0.0], &ints, &paths.grid).unwrap();
        assert!(zero.theta.iter().all(|v| *v == 0.0));

        let first = hedging_strategy(&bank, &[0.0, 1.0], &ints[..1], &paths.grid).unwrap();
        let second = hedging_strategy(&bank, &[0.0, 0.0, 1.0], &ints, &paths.grid).unwrap();
        for k in 0..=12 {
            let t = paths.grid.time(k);
            let phi1 = crate::features::neuron_value(&bank.orders[0][0], bank.activation, t)[0];
            let phi2 = crate::features::neuron_value(&bank.orders[1][0], bank.activation, t)[0];
            for p in 0..6 {
                assert_eq!(first.theta[[p, k, 0]], phi1);
                assert_relative_eq!(second.theta[[p, k, 0]], ints[1].w[[p, k]] * phi2, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn streaming_hedge_matches_stored_integrals() {
        let model = ModelSpec::cev(100.0, -0.02, 0.4).unwrap();
        let paths = simulate_paths(&model, TimeGrid::new(1.0, 20).unwrap(), 8, 3, Measure::Physical).unwrap();
        let bank = sample_feature_bank(3, &[2, 2, 2], 1, ActivationKind::Sigmoid, &InitSpec::default(), 5).unwrap();
        let ints = all_integrals(&bank, 3, &paths, &model);
        let weights = [0.3, 1.0, -0.5, 0.2, 0.7, -0.1, 0.05];
        let full = hedging_strategy(&bank, &weights, &ints, &paths.grid).unwrap();
        let stream = hedge_along_paths(&bank, &weights, &paths, &model, &[5, 2], &[0, 4, 19, 20]).unwrap();
        for (r, &p) in [5usize, 2].iter().enumerate() {
            for (s, &k) in [0usize, 4, 19, 20].iter().enumerate() {
                assert_relative_eq!(stream.theta[[r, s, 0]], full.theta[[p, k, 0]], max_relative = 1e-12, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn replication_is_exact_up_to_first_order() {
        let model = ModelSpec::affine(crate::models::AffineParams::sample_reference(2, 10.0, 4).unwrap()).unwrap();
        let paths = simulate_paths(&model, TimeGrid::new(1.0, 30).unwrap(), 40, 8, Measure::Physical).unwrap();
        let bank = sample_feature_bank(1, &[4], 2, ActivationKind::Sigmoid, &InitSpec::default(), 2).unwrap();
        let ints = TerminalIntegrals::compute(&bank, 1, &paths, &model).unwrap();
        let design = build_design(&bank, 1, &ints).unwrap();
        for weights in [vec![1.7], vec![0.4, 1.0, -2.0, 0.5, 3.0]] {
            let order = if weights.len() == 1 { 0 } else { 1 };
            let target = synthesize_payoff(&design.prefix(bank.n_columns(order)).unwrap(), &weights).unwrap();
            let theta = hedge_along_paths(&bank, &weights, &paths, &model, &(0..40).collect::<Vec<_>>(), &(0..=30).collect::<Vec<_>>()).unwrap();
            let gap = replication_gap(weights[0], &theta, &paths, &target).unwrap();
            assert!(gap.iter().all(|g| g.abs() <= 1e-12), "{gap:?}");
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn hedge_is_linear_in_weights(col in 1usize..7, delta in -3.0f64..3.0) {
            let (model, paths, bank) = bm_setup(4, 10, &[2, 2, 2]);
            let ids: Vec<usize> = (0..4).collect();
            let nodes: Vec<usize> = (0..=10).collect();
            let base = [0.1, 0.5, -0.3, 0.8, 0.2, -0.6, 0.4];
            let mut bumped = base;
            bumped[col] += delta;
            let mut unit = [0.0; 7];
            unit[col] = 1.0;
            let h0 = hedge_along_paths(&bank, &base, &paths, &model, &ids, &nodes).unwrap();
            let h1 = hedge_along_paths(&bank, &bumped, &paths, &model, &ids, &nodes).unwrap();
            let hu = hedge_along_paths(&bank, &unit, &paths, &model, &ids, &nodes).unwrap();
            for ((a, b), u) in h0.theta.iter().zip(h1.theta.iter()).zip(hu.theta.iter()) {
                prop_assert!((b - a - delta * u).abs() <= 1e-12 * (1.0 + a.abs() + b.abs()));
            }
        }
    }
}

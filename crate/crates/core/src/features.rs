//! Random neurons `φ(t) = (ρ(a_i t + b_i))_{i=1..d}` and their path
//! integrals.
//!
//! For a neuron `φ` and a simulated path the module computes the stochastic
//! integral `W(φ)_{t_k} = Σ_{j<k} φ(t_j)ᵀ ΔX_j` and its quadratic variation
//! `Q(φ)_{t_k} = Σ_{j<k} φ(t_j)ᵀ a(t_j, X_{t_j}) φ(t_j) Δt`, both with
//! left-point (predictable) evaluation.

use std::io::Write;

use ndarray::{Array2, Array3, ArrayView2, Axis};
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{write_tensor, ModelSpec, PathBatch, TimeGrid};
use crate::rng::{substream, Domain};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ActivationKind {
    #[default]
    Sigmoid,
    Relu,
    Tanh,
}

impl ActivationKind {
    #[inline]
    pub fn eval(self, u: f64) -> f64 {
        match self {
            ActivationKind::Sigmoid => 1.0 / (1.0 + (-u).exp()),
            ActivationKind::Relu => u.max(0.0),
            ActivationKind::Tanh => u.tanh(),
        }
    }
}

/// Distribution of hidden weights or biases.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitDistribution {
    #[default]
    StandardNormal,
    Normal { mean: f64, std: f64 },
    /// Representable in configs but rejected by the sampler: its density is
    /// not positive everywhere.
    Uniform { low: f64, high: f64 },
}

impl InitDistribution {
    fn sampler(&self) -> Result<Normal<f64>> {
        match *self {
            InitDistribution::StandardNormal => Ok(Normal::new(0.0, 1.0).expect("valid")),
            InitDistribution::Normal { mean, std } if std > 0.0 && mean.is_finite() && std.is_finite() => {
                Ok(Normal::new(mean, std).expect("valid"))
            }
            InitDistribution::Normal { mean, std } => Err(Error::Config(format!(
                "normal init distribution needs finite mean and std > 0 (got mean={mean}, std={std})"
            ))),
            InitDistribution::Uniform { .. } => Err(Error::Config(
                "init distributions must have a strictly positive density on the whole real line; \
                 use standard_normal or normal"
                    .into(),
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct InitSpec {
    /// Slopes `a`.
    #[serde(default)]
    pub a: InitDistribution,
    /// Offsets `b`.
    #[serde(default)]
    pub b: InitDistribution,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomNeuron {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

impl RandomNeuron {
    pub fn dim(&self) -> usize {
        self.a.len()
    }

    #[inline]
    pub fn value_into(&self, activation: ActivationKind, t: f64, out: &mut [f64]) {
        for ((o, a), b) in out.iter_mut().zip(&self.a).zip(&self.b) {
            *o = activation.eval(a * t + b);
        }
    }
}

/// `φ(t)`, componentwise `ρ(a_i t + b_i)`.
pub fn neuron_value(neuron: &RandomNeuron, activation: ActivationKind, t: f64) -> Vec<f64> {
    let mut out = vec![0.0; neuron.dim()];
    neuron.value_into(activation, t, &mut out);
    out
}

/// Random neurons grouped by chaos order: `orders[n-1]` holds the `m_n`
/// neurons of order `n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureBank {
    pub orders: Vec<Vec<RandomNeuron>>,
    pub activation: ActivationKind,
    pub dim: usize,
    pub seed: u64,
    pub init: InitSpec,
}

impl FeatureBank {
    pub fn max_order(&self) -> usize {
        self.orders.len()
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.orders.iter().map(Vec::len).collect()
    }

    /// Number of neurons of orders `1..=order`.
    pub fn neurons_up_to(&self, order: usize) -> usize {
        self.orders.iter().take(order).map(Vec::len).sum()
    }

    pub fn total_neurons(&self) -> usize {
        self.neurons_up_to(self.max_order())
    }

    /// Regression columns for orders `0..=order` (intercept included).
    pub fn n_columns(&self, order: usize) -> usize {
        1 + self.neurons_up_to(order)
    }

    /// `(order, neuron)` pairs of orders `1..=order`, in column order.
    pub fn iter_up_to(&self, order: usize) -> impl Iterator<Item = (usize, &RandomNeuron)> {
        self.orders
            .iter()
            .take(order)
            .enumerate()
            .flat_map(|(i, ns)| ns.iter().map(move |n| (i + 1, n)))
    }

    /// The bank restricted to orders `1..=order`.
    pub fn truncated(&self, order: usize) -> FeatureBank {
        FeatureBank {
            orders: self.orders.iter().take(order).cloned().collect(),
            ..self.clone()
        }
    }

    /// Largest order `N` whose column count equals `n_columns`, if any.
    pub fn order_for_columns(&self, n_columns: usize) -> Option<usize> {
        (0..=self.max_order()).rev().find(|&n| self.n_columns(n) == n_columns)
    }
}

/// Samples `m_n` neurons for every order `n = 1..=max_order`. Order `n` reads
/// its own substream, so a bank of lower maximal order is a prefix of a
/// larger one built from the same seed.
pub fn sample_feature_bank(
    max_order: usize,
    sizes: &[usize],
    dim: usize,
    activation: ActivationKind,
    init: &InitSpec,
    seed: u64,
) -> Result<FeatureBank> {
    if sizes.len() != max_order {
        return Err(Error::Config(format!(
            "need one network size per order: {} sizes for max order {max_order}",
            sizes.len()
        )));
    }
    if sizes.contains(&0) {
        return Err(Error::Config("every order needs at least one neuron".into()));
    }
    if dim == 0 {
        return Err(Error::Config("neuron dimension must be positive".into()));
    }
    let a_dist = init.a.sampler()?;
    let b_dist = init.b.sampler()?;
    let orders = sizes
        .iter()
        .enumerate()
        .map(|(i, &m)| {
            let mut rng = substream(seed, Domain::Features, (i + 1) as u64);
            (0..m)
                .map(|_| {
                    let a = (0..dim).map(|_| a_dist.sample(&mut rng)).collect();
                    let b = (0..dim).map(|_| b_dist.sample(&mut rng)).collect();
                    RandomNeuron { a, b }
                })
                .collect()
        })
        .collect();
    Ok(FeatureBank {
        orders,
        activation,
        dim,
        seed,
        init: *init,
    })
}

/// Neuron values on the grid, laid out `[k][neuron][i]`.
#[derive(Debug, Clone)]
pub(crate) struct PhiTable {
    pub n_neurons: usize,
    pub dim: usize,
    pub values: Vec<f64>,
}

impl PhiTable {
    pub fn new<'a>(neurons: impl IntoIterator<Item = &'a RandomNeuron>, activation: ActivationKind, grid: &TimeGrid, dim: usize) -> Self {
        let neurons: Vec<&RandomNeuron> = neurons.into_iter().collect();
        let n = neurons.len();
        let mut values = vec![0.0; (grid.steps + 1) * n * dim];
        if n == 0 {
            return PhiTable { n_neurons: 0, dim, values };
        }
        for (k, block) in values.chunks_mut(n * dim).enumerate() {
            let t = grid.time(k);
            for (neuron, out) in neurons.iter().zip(block.chunks_mut(dim)) {
                neuron.value_into(activation, t, out);
            }
        }
        PhiTable {
            n_neurons: n,
            dim,
            values,
        }
    }

    #[inline]
    pub fn at(&self, k: usize) -> &[f64] {
        let stride = self.n_neurons * self.dim;
        &self.values[k * stride..(k + 1) * stride]
    }
}

/// Walks one path, keeping `W` and `Q` of every neuron in `phi` up to date.
/// `visit(k, w, q)` sees the values at node `k` for `k = 0..=K`.
pub(crate) fn walk_path(
    phi: &PhiTable,
    states: ArrayView2<f64>,
    increments: ArrayView2<f64>,
    model: &ModelSpec,
    grid: &TimeGrid,
    mut visit: impl FnMut(usize, &[f64], &[f64]),
) {
    let n = phi.n_neurons;
    let d = phi.dim;
    let dt = grid.dt();
    let mut w = vec![0.0; n];
    let mut q = vec![0.0; n];
    let unit_diffusion = matches!(model, ModelSpec::BrownianMotion { .. });
    let scalar = d == 1 && !unit_diffusion;
    let mut x = vec![0.0; d];
    for k in 0..=grid.steps {
        visit(k, &w, &q);
        if k == grid.steps {
            break;
        }
        let row = phi.at(k);
        let dx = increments.row(k);
        if unit_diffusion {
            for (j, p) in row.chunks_exact(d).enumerate() {
                let mut dw = 0.0;
                let mut sq = 0.0;
                for i in 0..d {
                    dw += p[i] * dx[i];
                    sq += p[i] * p[i];
                }
                w[j] += dw;
                q[j] += sq * dt;
            }
        } else if scalar {
            let a = model.scalar_variance(states[[k, 0]]) * dt;
            for (j, p) in row.iter().enumerate() {
                w[j] += p * dx[0];
                q[j] += p * p * a;
            }
        } else {
            for (xi, s) in x.iter_mut().zip(states.row(k)) {
                *xi = *s;
            }
            let a = model.diffusion_matrix(&x);
            for (j, p) in row.chunks_exact(d).enumerate() {
                let mut dw = 0.0;
                let mut quad = 0.0;
                for i in 0..d {
                    dw += p[i] * dx[i];
                    let mut ap = 0.0;
                    for l in 0..d {
                        ap += a[(i, l)] * p[l];
                    }
                    quad += p[i] * ap;
                }
                w[j] += dw;
                q[j] += quad * dt;
            }
        }
    }
}

fn check_shapes(dim: usize, paths: &PathBatch, model: Option<&ModelSpec>) -> Result<()> {
    if dim != paths.dim() {
        return Err(Error::contract(format!(
            "neuron dimension {dim} does not match path dimension {}",
            paths.dim()
        )));
    }
    if let Some(model) = model {
        if model.dim() != paths.dim() {
            return Err(Error::contract(format!(
                "model dimension {} does not match path dimension {}",
                model.dim(),
                paths.dim()
            )));
        }
    }
    Ok(())
}

/// `W` and `Q` of one neuron along every path, each `M × (K+1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct NeuronPathIntegrals {
    pub w: Array2<f64>,
    pub q: Array2<f64>,
}

impl NeuronPathIntegrals {
    pub fn compute(
        neuron: &RandomNeuron,
        activation: ActivationKind,
        paths: &PathBatch,
        model: &ModelSpec,
    ) -> Result<Self> {
        check_shapes(neuron.dim(), paths, Some(model))?;
        let phi = PhiTable::new([neuron], activation, &paths.grid, neuron.dim());
        let m = paths.n_paths();
        let nodes = paths.grid.steps + 1;
        let mut w = Array2::zeros((m, nodes));
        let mut q = Array2::zeros((m, nodes));
        w.axis_iter_mut(Axis(0))
            .into_par_iter()
            .zip(q.axis_iter_mut(Axis(0)))
            .enumerate()
            .for_each(|(p, (mut w_row, mut q_row))| {
                walk_path(
                    &phi,
                    paths.states.index_axis(Axis(0), p),
                    paths.increments.index_axis(Axis(0), p),
                    model,
                    &paths.grid,
                    |k, wk, qk| {
                        w_row[k] = wk[0];
                        q_row[k] = qk[0];
                    },
                );
            });
        Ok(NeuronPathIntegrals { w, q })
    }

    /// Writes a `CHWQ` file: the `CHPB` layout with `d = 2`, the last axis
    /// holding `(W, Q)`.
    pub fn write_binary<W: Write>(&self, writer: W) -> Result<()> {
        let (m, nodes) = self.w.dim();
        let mut data = Array3::zeros((m, nodes, 2));
        data.index_axis_mut(Axis(2), 0).assign(&self.w);
        data.index_axis_mut(Axis(2), 1).assign(&self.q);
        write_tensor(writer, WQ_MAGIC, data.view())
    }
}

pub const WQ_MAGIC: &[u8; 4] = b"CHWQ";

/// Stochastic integral `W(φ)` on every path and grid node.
pub fn compute_w(neuron: &RandomNeuron, activation: ActivationKind, paths: &PathBatch) -> Result<Array2<f64>> {
    check_shapes(neuron.dim(), paths, None)?;
    let m = paths.n_paths();
    let steps = paths.grid.steps;
    let phi: Vec<Vec<f64>> = (0..steps)
        .map(|k| neuron_value(neuron, activation, paths.grid.time(k)))
        .collect();
    let mut w = Array2::zeros((m, steps + 1));
    w.axis_iter_mut(Axis(0))
        .into_par_iter()
        .enumerate()
        .for_each(|(p, mut row)| {
            let incr = paths.increments.index_axis(Axis(0), p);
            let mut acc = 0.0;
            for k in 0..steps {
                acc += phi[k].iter().zip(incr.row(k)).map(|(a, b)| a * b).sum::<f64>();
                row[k + 1] = acc;
            }
        });
    Ok(w)
}

/// Quadratic variation `Q(φ)` on every path and grid node, from the model's
/// diffusion matrix at the left grid point.
pub fn compute_q(
    neuron: &RandomNeuron,
    activation: ActivationKind,
    paths: &PathBatch,
    model: &ModelSpec,
) -> Result<Array2<f64>> {
    Ok(NeuronPathIntegrals::compute(neuron, activation, paths, model)?.q)
}

/// Terminal values `W(φ_j)_T`, `Q(φ_j)_T` for all neurons of orders
/// `1..=max_order`, each `M × n_neurons` in bank column order.
#[derive(Debug, Clone, PartialEq)]
pub struct TerminalIntegrals {
    pub w: Array2<f64>,
    pub q: Array2<f64>,
}

impl TerminalIntegrals {
    pub fn n_neurons(&self) -> usize {
        self.w.ncols()
    }

    pub fn compute(bank: &FeatureBank, max_order: usize, paths: &PathBatch, model: &ModelSpec) -> Result<Self> {
        Self::compute_range(bank, max_order, paths, model, 0..paths.n_paths())
    }

    /// As [`TerminalIntegrals::compute`] for the paths in `range`; row `r`
    /// belongs to path `range.start + r`.
    pub fn compute_range(
        bank: &FeatureBank,
        max_order: usize,
        paths: &PathBatch,
        model: &ModelSpec,
        range: std::ops::Range<usize>,
    ) -> Result<Self> {
        check_shapes(bank.dim, paths, Some(model))?;
        if range.end > paths.n_paths() || range.start > range.end {
            return Err(Error::contract(format!(
                "path range {range:?} outside {} paths",
                paths.n_paths()
            )));
        }
        if max_order > bank.max_order() {
            return Err(Error::contract(format!(
                "bank has orders up to {}, requested {max_order}",
                bank.max_order()
            )));
        }
        let phi = PhiTable::new(bank.iter_up_to(max_order).map(|(_, n)| n), bank.activation, &paths.grid, bank.dim);
        let m = range.len();
        let n = phi.n_neurons;
        let mut w = Array2::zeros((m, n));
        let mut q = Array2::zeros((m, n));
        let last = paths.grid.steps;
        if n > 0 {
            w.axis_iter_mut(Axis(0))
                .into_par_iter()
                .zip(q.axis_iter_mut(Axis(0)))
                .enumerate()
                .for_each(|(r, (mut w_row, mut q_row))| {
                    let p = range.start + r;
                    walk_path(
                        &phi,
                        paths.states.index_axis(Axis(0), p),
                        paths.increments.index_axis(Axis(0), p),
                        model,
                        &paths.grid,
                        |k, wk, qk| {
                            if k == last {
                                w_row.as_slice_mut().expect("contiguous").copy_from_slice(wk);
                                q_row.as_slice_mut().expect("contiguous").copy_from_slice(qk);
                            }
                        },
                    );
                });
        }
        Ok(TerminalIntegrals { w, q })
    }

    /// Terminal values taken from full per-neuron integrals.
    pub fn from_path_integrals(integrals: &[NeuronPathIntegrals]) -> Result<Self> {
        let m = integrals.first().map_or(0, |i| i.w.nrows());
        if integrals.iter().any(|i| i.w.nrows() != m || i.q.dim() != i.w.dim()) {
            return Err(Error::contract("path integrals have inconsistent shapes"));
        }
        let n = integrals.len();
        let w = Array2::from_shape_fn((m, n), |(p, j)| integrals[j].w[[p, integrals[j].w.ncols() - 1]]);
        let q = Array2::from_shape_fn((m, n), |(p, j)| integrals[j].q[[p, integrals[j].q.ncols() - 1]]);
        Ok(TerminalIntegrals { w, q })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{simulate_paths, Measure};
    use approx::assert_relative_eq;
    use ndarray::{array, s};

    fn bm_paths(m: usize, k: usize, seed: u64) -> PathBatch {
        simulate_paths(&ModelSpec::brownian(vec![0.0]).unwrap(), TimeGrid::new(1.0, k).unwrap(), m, seed, Measure::Physical).unwrap()
    }

    fn constant_neuron(c: f64) -> RandomNeuron {
        RandomNeuron { a: vec![0.0], b: vec![c] }
    }

    #[test]
    fn activations() {
        assert_eq!(ActivationKind::Sigmoid.eval(0.0), 0.5);
        assert_eq!(ActivationKind::Relu.eval(-0.3), 0.0);
        assert_eq!(ActivationKind::Relu.eval(0.3), 0.3);
        assert_eq!(ActivationKind::Tanh.eval(0.0), 0.0);
    }

    #[test]
    fn neuron_value_examples() {
        let zero = RandomNeuron { a: vec![0.0; 3], b: vec![0.0; 3] };
        assert_eq!(neuron_value(&zero, ActivationKind::Sigmoid, 0.7), vec![0.5; 3]);
        let relu = RandomNeuron { a: vec![1.0], b: vec![-0.5] };
        assert_eq!(neuron_value(&relu, ActivationKind::Relu, 0.25), vec![0.0]);
        let sig = RandomNeuron { a: vec![2.0], b: vec![-1.0] };
        assert_relative_eq!(neuron_value(&sig, ActivationKind::Sigmoid, 1.0)[0], 1.0 / (1.0 + (-1.0f64).exp()), epsilon = 1e-15);
        assert_relative_eq!(neuron_value(&sig, ActivationKind::Sigmoid, 1.0)[0], 0.731_058_578_630_004_9, epsilon = 1e-15);
    }

    #[test]
    fn bank_shapes_and_determinism() {
        let init = InitSpec::default();
        let bank = sample_feature_bank(6, &[50; 6], 1, ActivationKind::Sigmoid, &init, 7).unwrap();
        assert_eq!(bank.total_neurons(), 300);
        assert_eq!(bank.n_columns(6), 301);
        assert_eq!(bank, sample_feature_bank(6, &[50; 6], 1, ActivationKind::Sigmoid, &init, 7).unwrap());

        let one = sample_feature_bank(1, &[1], 3, ActivationKind::Sigmoid, &init, 1).unwrap();
        assert_eq!(one.orders[0][0].a.len(), 3);
        assert_eq!(one.orders[0][0].b.len(), 3);

        // lower maximal order is a prefix
        let small = sample_feature_bank(2, &[50; 2], 1, ActivationKind::Sigmoid, &init, 7).unwrap();
        assert_eq!(small.orders[..], bank.orders[..2]);
        assert_eq!(bank.truncated(2).orders, small.orders);
    }

    #[test]
    fn non_positive_density_is_rejected() {
        let init = InitSpec { a: InitDistribution::Uniform { low: -1.0, high: 1.0 }, b: InitDistribution::StandardNormal };
        let err = sample_feature_bank(1, &[2], 1, ActivationKind::Sigmoid, &init, 0).unwrap_err();
        assert!(matches!(err, Error::Config(ref m) if m.contains("positive density")));
        let init = InitSpec { a: InitDistribution::Normal { mean: 0.0, std: 0.0 }, b: InitDistribution::StandardNormal };
        assert!(sample_feature_bank(1, &[2], 1, ActivationKind::Sigmoid, &init, 0).is_err());
        assert!(sample_feature_bank(2, &[2], 1, ActivationKind::Sigmoid, &InitSpec::default(), 0).is_err());
    }

    #[test]
    fn unit_integrand_telescopes() {
        let paths = bm_paths(20, 30, 4);
        let one = constant_neuron(1.0);
        let w = compute_w(&one, ActivationKind::Relu, &paths).unwrap();
        let q = compute_q(&one, ActivationKind::Relu, &paths, &ModelSpec::brownian(vec![0.0]).unwrap()).unwrap();
        for m in 0..20 {
            for k in 0..=30 {
                assert_relative_eq!(w[[m, k]], paths.states[[m, k, 0]] - paths.states[[m, 0, 0]], epsilon = 1e-12);
                assert_relative_eq!(q[[m, k]], paths.grid.time(k), epsilon = 1e-12);
            }
        }
        let zero = constant_neuron(0.0);
        assert!(compute_w(&zero, ActivationKind::Relu, &paths).unwrap().iter().all(|v| *v == 0.0));
        assert!(compute_q(&zero, ActivationKind::Relu, &paths, &ModelSpec::brownian(vec![0.0]).unwrap())
            .unwrap()
            .iter()
            .all(|v| *v == 0.0));
    }

    #[test]
    fn sigmoid_integral_on_frozen_path() {
        let grid = TimeGrid::new(1.5, 3).unwrap();
        let states = array![[[0.0], [0.4], [0.1], [0.7]]];
        let paths = PathBatch::from_states(grid, states, 0, Measure::Physical).unwrap();
        let neuron = RandomNeuron { a: vec![2.0], b: vec![-1.0] };
        let sig = |u: f64| 1.0 / (1.0 + (-u).exp());
        // t = 0, 0.5, 1.0; increments 0.4, -0.3, 0.6
        let expected = [
            0.0,
            sig(-1.0) * 0.4,
            sig(-1.0) * 0.4 + sig(0.0) * -0.3,
            sig(-1.0) * 0.4 + sig(0.0) * -0.3 + sig(1.0) * 0.6,
        ];
        let w = compute_w(&neuron, ActivationKind::Sigmoid, &paths).unwrap();
        for k in 0..4 {
            assert_relative_eq!(w[[0, k]], expected[k], epsilon = 1e-14);
        }
    }

    #[test]
    fn cev_quadratic_variation_is_direct_sum() {
        let model = ModelSpec::cev(100.0, -0.02, 0.4).unwrap();
        let paths = simulate_paths(&model, TimeGrid::new(1.0, 25).unwrap(), 3, 2, Measure::Physical).unwrap();
        let q = compute_q(&constant_neuron(1.0), ActivationKind::Relu, &paths, &model).unwrap();
        let dt = paths.grid.dt();
        for m in 0..3 {
            let direct: f64 = (0..25).map(|k| 0.16 * paths.states[[m, k, 0]].max(0.0) * dt).sum();
            assert_relative_eq!(q[[m, 25]], direct, max_relative = 1e-13);
        }
    }

    #[test]
    fn quadratic_variation_is_monotone() {
        let model = ModelSpec::affine(crate::models::AffineParams::sample_reference(2, 10.0, 3).unwrap()).unwrap();
        let paths = simulate_paths(&model, TimeGrid::new(1.0, 40).unwrap(), 50, 3, Measure::Physical).unwrap();
        let bank = sample_feature_bank(1, &[5], 2, ActivationKind::Sigmoid, &InitSpec::default(), 1).unwrap();
        for neuron in &bank.orders[0] {
            let q = compute_q(neuron, ActivationKind::Sigmoid, &paths, &model).unwrap();
            for row in q.rows() {
                assert_eq!(row[0], 0.0);
                for pair in row.as_slice().unwrap().windows(2) {
                    assert!(pair[1] >= pair[0]);
                }
            }
        }
    }

    #[test]
    fn w_scales_linearly() {
        let paths = bm_paths(10, 20, 8);
        let base = RandomNeuron { a: vec![0.0], b: vec![0.3] };
        let w1 = compute_w(&base, ActivationKind::Relu, &paths).unwrap();
        let w2 = compute_w(&RandomNeuron { a: vec![0.0], b: vec![0.6] }, ActivationKind::Relu, &paths).unwrap();
        for (a, b) in w1.iter().zip(w2.iter()) {
            assert_relative_eq!(2.0 * a, *b, epsilon = 1e-14);
        }
    }

    #[test]
    fn discrete_ito_isometry() {
        let m = 100_000;
        let paths = bm_paths(m, 50, 12);
        let neuron = RandomNeuron { a: vec![1.3], b: vec![-0.4] };
        let w = compute_w(&neuron, ActivationKind::Sigmoid, &paths).unwrap();
        let q = compute_q(&neuron, ActivationKind::Sigmoid, &paths, &ModelSpec::brownian(vec![0.0]).unwrap()).unwrap();
        let terminal = w.slice(s![.., 50]);
        let mean = terminal.mean().unwrap();
        let var = terminal.mapv(|v| (v - mean).powi(2)).sum() / (m - 1) as f64;
        let qv = q[[0, 50]];
        assert!(q.slice(s![.., 50]).iter().all(|v| *v == qv));
        // the variance of a Gaussian sample variance is 2σ⁴/(M-1)
        let se = qv * (2.0 / (m - 1) as f64).sqrt();
        assert!((var - qv).abs() < 5.0 * se, "var {var} vs Q {qv}");
    }

    #[test]
    fn terminal_integrals_match_full_paths() {
        let model = ModelSpec::cev(100.0, -0.02, 0.4).unwrap();
        let paths = simulate_paths(&model, TimeGrid::new(1.0, 30).unwrap(), 40, 6, Measure::Physical).unwrap();
        let bank = sample_feature_bank(2, &[3, 2], 1, ActivationKind::Sigmoid, &InitSpec::default(), 9).unwrap();
        let term = TerminalIntegrals::compute(&bank, 2, &paths, &model).unwrap();
        let full: Vec<_> = bank
            .iter_up_to(2)
            .map(|(_, n)| NeuronPathIntegrals::compute(n, bank.activation, &paths, &model).unwrap())
            .collect();
        let from_full = TerminalIntegrals::from_path_integrals(&full).unwrap();
        assert_eq!(term, from_full);
        let w_direct = compute_w(&bank.orders[0][1], bank.activation, &paths).unwrap();
        for m in 0..40 {
            assert_relative_eq!(term.w[[m, 1]], w_direct[[m, 30]], max_relative = 1e-12, epsilon = 1e-12);
        }
    }

    #[test]
    fn wq_dump_has_own_magic() {
        let paths = bm_paths(2, 4, 1);
        let model = ModelSpec::brownian(vec![0.0]).unwrap();
        let ints = NeuronPathIntegrals::compute(&constant_neuron(1.0), ActivationKind::Relu, &paths, &model).unwrap();
        let mut buf = Vec::new();
        ints.write_binary(&mut buf).unwrap();
        assert_eq!(&buf[..4], b"CHWQ");
        let back = crate::models::read_tensor(buf.as_slice(), WQ_MAGIC).unwrap();
        assert_eq!(back.index_axis(Axis(2), 0), ints.w);
        assert_eq!(back.index_axis(Axis(2), 1), ints.q);
    }
}

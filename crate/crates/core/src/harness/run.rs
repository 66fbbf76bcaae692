use std::time::Instant;

use ndarray::{Axis, Zip};
use rayon::prelude::*;

use super::config::ExperimentConfig;
use super::payoff::{evaluate_payoff, PayoffSpec};
use super::report::{ExperimentOutput, FitReport, HedgeRow, OrderReport, ScatterRow};
use crate::chaos::{hedge_along_paths, replication_gap, ChaosRows, HedgePaths};
use crate::error::{Error, Result};
use crate::features::{sample_feature_bank, FeatureBank};
use crate::models::{simulate_paths, Measure, ModelSpec, PathBatch};
use crate::oracle::{bm_call_delta, AsianPutPricer, BasketPutPricer};
use crate::regression::{fit_readout, imse, mse, predict};
use crate::rng::splitmix64;

/// Grid nodes `0, thin, 2·thin, …` plus the terminal node.
pub fn thinned_nodes(steps: usize, thin: usize) -> Vec<usize> {
    let mut ids: Vec<usize> = (0..=steps).step_by(thin.max(1)).collect();
    if ids.last() != Some(&steps) {
        ids.push(steps);
    }
    ids
}

fn unavailable(e: Error) -> Result<Option<HedgePaths>> {
    match e {
        Error::Domain(_) => Ok(None),
        other => Err(other),
    }
}

/// Oracle hedge `θ(t_k, X_{t_k})` along the selected paths and nodes, or
/// `None` when no oracle exists for the model and payoff. Prices are taken
/// under the zero-drift version of the model; the paths themselves may come
/// from the physical measure.
pub fn reference_hedge(
    config: &ExperimentConfig,
    paths: &PathBatch,
    path_ids: &[usize],
    time_ids: &[usize],
) -> Result<Option<HedgePaths>> {
    let grid = paths.grid;
    let horizon = grid.horizon;
    let d = paths.dim();
    let q_model = config.model.zero_drift();
    let mut out = HedgePaths::zeros(path_ids.to_vec(), time_ids.to_vec(), d, grid);
    let times: Vec<f64> = time_ids.iter().map(|k| grid.time(*k)).collect();
    let settings = &config.oracle;
    match (&config.model, &config.payoff) {
        (ModelSpec::BrownianMotion { .. }, PayoffSpec::EuropeanCall { strike }) => {
            let results: Vec<Result<()>> = out
                .theta
                .axis_iter_mut(Axis(0))
                .into_par_iter()
                .zip(path_ids.par_iter())
                .map(|(mut rows, &p)| {
                    for (s, &k) in time_ids.iter().enumerate() {
                        rows[[s, 0]] = bm_call_delta(paths.states[[p, k, 0]], times[s], *strike, horizon)?;
                    }
                    Ok(())
                })
                .collect();
            results.into_iter().collect::<Result<Vec<()>>>()?;
        }
        (_, PayoffSpec::AsianPut { strike }) if d == 1 => {
            let pricers = match times
                .par_iter()
                .map(|t| AsianPutPricer::new(&q_model, *t, *strike, horizon, &settings.quad, settings.ode_steps))
                .collect::<Result<Vec<_>>>()
            {
                Ok(p) => p,
                Err(e) => return unavailable(e),
            };
            let dt = grid.dt();
            let results: Vec<Result<()>> = out
                .theta
                .axis_iter_mut(Axis(0))
                .into_par_iter()
                .zip(path_ids.par_iter())
                .map(|(mut rows, &p)| {
                    let path = paths.states.index_axis(Axis(0), p);
                    let mut sum = 0.0;
                    let mut j = 0;
                    for (s, &k) in time_ids.iter().enumerate() {
                        while j < k {
                            sum += path[[j, 0]];
                            j += 1;
                        }
                        let avg = sum * dt / horizon;
                        rows[[s, 0]] = pricers[s].value_delta(path[[k, 0]], avg)?.1;
                    }
                    Ok(())
                })
                .collect();
            results.into_iter().collect::<Result<Vec<()>>>()?;
        }
        (_, PayoffSpec::BasketPut { strike, weights }) => {
            let pricers = match times
                .par_iter()
                .map(|t| BasketPutPricer::new(&q_model, *t, *strike, weights, horizon, &settings.quad, settings.ode_steps))
                .collect::<Result<Vec<_>>>()
            {
                Ok(p) => p,
                Err(e) => return unavailable(e),
            };
            let results: Vec<Result<()>> = out
                .theta
                .axis_iter_mut(Axis(0))
                .into_par_iter()
                .zip(path_ids.par_iter())
                .map(|(mut rows, &p)| {
                    for (s, &k) in time_ids.iter().enumerate() {
                        let x = paths.states.index_axis(Axis(0), p).row(k).to_vec();
                        let (_, grad) = pricers[s].value_delta(&x)?;
                        for (i, g) in grad.into_iter().enumerate() {
                            rows[[s, i]] = g;
                        }
                    }
                    Ok(())
                })
                .collect();
            results.into_iter().collect::<Result<Vec<()>>>()?;
        }
        _ => return Ok(None),
    }
    Ok(Some(out))
}

fn bank_for_order(config: &ExperimentConfig, nested: &FeatureBank, order: usize, dim: usize) -> Result<FeatureBank> {
    if config.nested_bank {
        Ok(nested.truncated(order))
    } else {
        let seed = splitmix64(config.seeds.features.wrapping_add(order as u64));
        sample_feature_bank(order, &vec![config.m_n; order], dim, config.activation, &config.init, seed)
    }
}

fn mean_var(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    (mean, v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n)
}

/// Runs the pipeline: simulate, sample neurons, and for every order build the
/// regressors, fit, predict the test set and compute the hedge.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    config.validate()?;
    let model = &config.model;
    let d = model.dim();
    let m = config.n_paths;
    let (n_train, n_test) = config.split_sizes();

    let paths = simulate_paths(model, config.grid, m, config.seeds.paths, Measure::Physical).map_err(|e| e.in_stage("simulate"))?;
    let payoff = evaluate_payoff(&config.payoff, &paths).map_err(|e| e.in_stage("payoff"))?;
    let max_order = config.max_order();
    let bank = sample_feature_bank(max_order, &vec![config.m_n; max_order], d, config.activation, &config.init, config.seeds.features)
        .map_err(|e| e.in_stage("features"))?;

    let steps = config.grid.steps;
    let test_ids: Vec<usize> = (n_train..m).collect();
    let all_nodes: Vec<usize> = (0..=steps).collect();
    let thin = match model {
        ModelSpec::BrownianMotion { .. } => 1,
        _ => config.oracle.thin,
    };
    let ref_nodes = thinned_nodes(steps, thin);
    let reference = reference_hedge(config, &paths, &test_ids, &ref_nodes).map_err(|e| e.in_stage("reference hedge"))?;
    let (test_mean, test_var) = mean_var(&payoff[n_train..]);

    let sample_n = config.hedge_sample_paths.min(n_test);
    let mut orders = Vec::with_capacity(config.orders.len());
    let mut scatter = Vec::new();
    let mut hedge_rows = Vec::new();
    for (pos, &order) in config.orders.iter().enumerate() {
        let bank_n = bank_for_order(config, &bank, order, d).map_err(|e| e.in_stage("features"))?;
        let start = Instant::now();
        let train_rows = ChaosRows::new(&bank_n, order, &paths, model, 0..n_train)?;
        let mut fit = fit_readout(&train_rows, &payoff[..n_train], config.ridge_lambda).map_err(|e| e.in_stage("regression"))?;
        let test_rows = ChaosRows::new(&bank_n, order, &paths, model, n_train..m)?;
        let pred = predict(&test_rows, &fit.weights).map_err(|e| e.in_stage("prediction"))?;
        let test_mse = mse(&pred, &payoff[n_train..])?;
        fit.test_mse = Some(test_mse);
        let hedge = hedge_along_paths(&bank_n, &fit.weights, &paths, model, &test_ids, &all_nodes).map_err(|e| e.in_stage("hedge"))?;
        let gap = replication_gap(fit.weights[0], &hedge, &paths, &pred)?;
        let thinned = HedgePaths {
            theta: hedge.theta.select(Axis(1), &ref_nodes),
            path_ids: test_ids.clone(),
            time_ids: ref_nodes.clone(),
            grid: config.grid,
        };
        let imse_test = reference.as_ref().map(|r| imse(&thinned, r)).transpose()?;
        let runtime = start.elapsed().as_secs_f64();

        let (_, pred_var) = mean_var(&pred);
        let gap_rms = (gap.iter().map(|g| g * g).sum::<f64>() / gap.len() as f64).sqrt();
        orders.push(OrderReport {
            order,
            n_params: fit.weights.len(),
            train_mse: fit.train_mse,
            test_mse,
            imse_test,
            runtime_seconds: runtime,
            train_sse: fit.train_mse * n_train as f64,
            test_sse: test_mse * n_test as f64,
            imse_sum: imse_test.map(|v| v * n_test as f64),
            ridge_lambda: fit.ridge_lambda,
            condition_estimate: fit.condition_estimate,
            effective_rank: fit.effective_rank,
            replication_gap_rms: gap_rms,
            replication_gap_max_abs: gap.iter().fold(0.0, |m, g| m.max(g.abs())),
            replication_gap_ratio: (pred_var > 0.0).then(|| gap_rms / pred_var.sqrt()),
            weights: fit.weights.clone(),
        });
        scatter.extend(test_ids.iter().zip(pred.iter()).map(|(&p, &y)| ScatterRow {
            order,
            path_id: p,
            true_payoff: payoff[p],
            predicted_payoff: y,
        }));
        if pos + 1 == config.orders.len() {
            for (r, &path_id) in test_ids.iter().take(sample_n).enumerate() {
                for (s, &k) in ref_nodes.iter().enumerate() {
                    for i in 0..d {
                        hedge_rows.push(HedgeRow {
                            path_id,
                            t: config.grid.time(k),
                            asset: i,
                            theta_hat: thinned.theta[[r, s, i]],
                            theta_ref: reference.as_ref().map(|h| h.theta[[r, s, i]]),
                        });
                    }
                }
            }
        }
    }
    debug_assert!(Zip::from(&paths.increments).all(|v| v.is_finite()));

    Ok(ExperimentOutput {
        report: FitReport {
            version: env!("CARGO_PKG_VERSION").to_string(),
            config: config.clone(),
            seeds: config.seeds,
            n_train,
            n_test,
            oracle_available: reference.is_some(),
            oracle_thin: thin,
            hedge_time_nodes: ref_nodes.len(),
            test_payoff_mean: test_mean,
            test_payoff_variance: test_var,
            orders,
        },
        scatter,
        hedge_rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::presets;
    use crate::models::TimeGrid;
    use approx::assert_relative_eq;

    fn small_bm(orders: Vec<usize>) -> ExperimentConfig {
        let mut c = presets::bm(true, 11).unwrap();
        c.n_paths = 400;
        c.grid = TimeGrid::new(1.0, 20).unwrap();
        c.m_n = 5;
        c.orders = orders;
        c
    }

    #[test]
    fn intercept_only_predicts_train_mean() {
        let c = small_bm(vec![0]);
        let out = run_experiment(&c).unwrap();
        let paths = simulate_paths(&c.model, c.grid, c.n_paths, c.seeds.paths, Measure::Physical).unwrap();
        let g = evaluate_payoff(&c.payoff, &paths).unwrap();
        let (n_train, _) = c.split_sizes();
        let mean = g[..n_train].iter().sum::<f64>() / n_train as f64;
        let direct = g[n_train..].iter().map(|y| (y - mean).powi(2)).sum::<f64>() / (c.n_paths - n_train) as f64;
        assert!((out.report.orders[0].test_mse - direct).abs() <= 1e-10);
        assert_eq!(out.report.orders[0].n_params, 1);
    }

    #[test]
    fn nested_orders_match_independent_runs() {
        let full = run_experiment(&small_bm(vec![0, 1, 2])).unwrap();
        let single = run_experiment(&small_bm(vec![1])).unwrap();
        let a: Vec<f64> = full.scatter.iter().filter(|r| r.order == 1).map(|r| r.predicted_payoff).collect();
        let b: Vec<f64> = single.scatter.iter().map(|r| r.predicted_payoff).collect();
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() <= 1e-10);
        }
    }

    #[test]
    fn fresh_banks_differ_from_nested() {
        let mut c = small_bm(vec![1, 2]);
        let nested = run_experiment(&c).unwrap();
        c.nested_bank = false;
        let fresh = run_experiment(&c).unwrap();
        assert_ne!(nested.report.orders[1].weights, fresh.report.orders[1].weights);
    }

    #[test]
    fn bm_reference_hedge_examples() {
        let mut c = small_bm(vec![0]);
        c.payoff = PayoffSpec::EuropeanCall { strike: 0.0 };
        let paths = simulate_paths(&c.model, c.grid, 3, 1, Measure::Physical).unwrap();
        let h = reference_hedge(&c, &paths, &[0, 2], &[0]).unwrap().unwrap();
        assert_relative_eq!(h.theta[[0, 0, 0]], 0.5, epsilon = 1e-15);
        c.payoff = PayoffSpec::EuropeanCall { strike: -10.0 };
        let h = reference_hedge(&c, &paths, &[1], &[0, 10]).unwrap().unwrap();
        assert!(h.theta.iter().all(|v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn cev_reference_at_start_matches_oracle() {
        let mut c = presets::cev(true, 3).unwrap();
        c.grid = TimeGrid::new(1.0, 10).unwrap();
        let paths = simulate_paths(&c.model, c.grid, 2, 1, Measure::Physical).unwrap();
        let h = reference_hedge(&c, &paths, &[0], &[0]).unwrap().unwrap();
        let (_, delta) = crate::oracle::asian_put_value_delta(
            &c.model.zero_drift(),
            100.0,
            0.0,
            0.0,
            102.0,
            1.0,
            &c.oracle.quad,
            c.oracle.ode_steps,
        )
        .unwrap();
        assert_relative_eq!(h.theta[[0, 0, 0]], delta, max_relative = 1e-12);
    }

    #[test]
    fn unsupported_pairs_have_no_oracle() {
        let mut c = small_bm(vec![0]);
        c.payoff = PayoffSpec::AsianPut { strike: 0.0 };
        c.model = ModelSpec::polynomial_1d(0.5, 0.0, 0.0, 0.1, 0.0, 0.2, crate::models::StateSpace::RealLine).unwrap();
        let paths = simulate_paths(&c.model, c.grid, 2, 1, Measure::Physical).unwrap();
        assert!(reference_hedge(&c, &paths, &[0], &[0]).unwrap().is_none());
    }

    #[test]
    fn thinning_keeps_terminal_node() {
        assert_eq!(thinned_nodes(10, 4), vec![0, 4, 8, 10]);
        assert_eq!(thinned_nodes(10, 5), vec![0, 5, 10]);
        assert_eq!(thinned_nodes(3, 1), vec![0, 1, 2, 3]);
    }
}

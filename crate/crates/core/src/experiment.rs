//! Scenario composition and the experiment harness: build a market from
//! config, solve it, run the non-cooperative baseline, aggregate Monte
//! Carlo batches, time solvers, and produce the figure-recipe tables.

use std::collections::BTreeSet;
use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;

use crate::coalition::{
    assess_coalition, majp_solve, ConstraintSet, DeviceProfile, MarketInstance, MarketParams,
    SolveTrace, TableGame,
};
use crate::config::{Config, ScenarioKind};
use crate::error::{Error, Result};
use crate::leakage::{influence_matrix, sequential_correlation_estimate, LeakageMatrix};
use crate::learner::{
    data_type, improvement_potential, marginal_contribution, train, DataType, ModelParams,
};
use crate::oracle;
use crate::report::{LeakageSummary, MetricsReport};
use crate::rng;
use crate::synth::{generate_correlated_profiles, CorrelationSpec, SellerDataset};
use crate::valuation::{leakage_valuation, value_depression_series, DepressionSeries};

/// A fully built market: data, the buyer's leakage estimate, and the
/// solver-ready instance.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub datasets: Vec<SellerDataset>,
    pub leakage: LeakageMatrix,
    pub types: Vec<DataType>,
    pub instance: MarketInstance,
    /// Group index each device was generated in.
    pub groups: Vec<usize>,
}

/// One solved market run.
#[derive(Debug, Clone)]
pub struct ScenarioRun {
    pub trace: SolveTrace,
    pub report: MetricsReport,
}

/// A named pass/fail verdict from a figure recipe.
#[derive(Debug, Clone)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &str, pass: bool, detail: String) -> Self {
        Check {
            name: name.into(),
            pass,
            detail,
        }
    }
}

/// Normalization constant for per-device payoffs: the ideal payoff of a
/// full per-device budget share plus a saturated group gain.
pub fn payoff_normalizer(cfg: &Config) -> f64 {
    cfg.market.budget_per_device + 1.0
}

fn group_covariance(cfg: &Config) -> Vec<Vec<f64>> {
    let s = &cfg.scenario;
    let m = cfg.num_devices();
    let w = s.within_group_correlation;
    let mut cov = vec![vec![0.0; m]; m];
    for i in 0..m {
        for j in 0..m {
            if i == j {
                cov[i][j] = 1.0;
            } else {
                let gi = i / s.devices_per_group;
                let gj = j / s.devices_per_group;
                let d = gi.abs_diff(gj) as i32;
                cov[i][j] = w * s.group_correlation_decay.powi(d);
            }
        }
    }
    cov
}

/// Zero out estimated correlations below the sampling noise floor
/// `3/sqrt(rounds)` before deriving influence, so influence reflects
/// structure rather than estimation noise.
pub fn denoised_influence(matrix: &LeakageMatrix, rounds: usize) -> Vec<Vec<f64>> {
    let floor = 3.0 / (rounds.max(1) as f64).sqrt();
    let m = matrix.devices();
    let mut r = matrix.r.clone();
    for i in 0..m {
        for j in 0..m {
            if i != j && r[i][j].abs() < floor {
                r[i][j] = 0.0;
            }
        }
    }
    influence_matrix(&r)
}

/// Build the full market scenario for a config and seed: generate data,
/// estimate leakage, score data types, and assemble the solver instance.
pub fn build_scenario(cfg: &Config, seed: u64) -> Result<Scenario> {
    cfg.validate()?;
    if cfg.scenario.kind != ScenarioKind::Market {
        return Err(Error::Config(
            "build_scenario requires a market scenario".into(),
        ));
    }
    let s = &cfg.scenario;
    let m = cfg.num_devices();

    let spec = CorrelationSpec {
        num_devices: m,
        mean_vector: vec![0.0; m],
        covariance: group_covariance(cfg),
        samples_per_device: vec![s.samples_per_device; m],
        feature_dim: s.feature_dim,
        shared_sample_ids: None,
    };
    let datasets = generate_correlated_profiles(&spec, rng::derive(seed, 10))?;

    // The buyer's sequential correlation inference on the revealed streams.
    let streams: Vec<Vec<f64>> = datasets.iter().map(|d| d.signal_stream()).collect();
    let mut leakage = sequential_correlation_estimate(&streams, cfg.leakage.tolerance)?;
    if cfg.leakage.denoise {
        leakage.g_influence = denoised_influence(&leakage, s.samples_per_device);
    }

    // Data types: marginal contribution of each device's leading sample
    // batch, gated by its privacy preference.
    let baseline = ModelParams::zeros(s.feature_dim);
    let potential_fn = improvement_potential(&baseline);
    let mut xi_rng = rng::stream_rng(seed, 20);
    let mut types = Vec::with_capacity(m);
    for (i, ds) in datasets.iter().enumerate() {
        let samples = ds.samples();
        let z = vec![samples[0].clone()];
        let theta = marginal_contribution(
            &z,
            &samples,
            cfg.learner.batch_size,
            cfg.learner.mc_draws,
            rng::derive(seed, 100 + i as u64),
            &potential_fn,
        )?;
        let group = i / s.devices_per_group;
        let jitter = if s.xi_jitter > 0.0 {
            xi_rng.random_range(-s.xi_jitter..s.xi_jitter)
        } else {
            0.0
        };
        let xi = (s.xi_levels[group] + jitter).clamp(0.0, 1.0);
        types.push(data_type(theta, xi, s.groups)?);
    }

    // Gradient dissimilarity of each device at the jointly trained model.
    let model = train(
        &datasets,
        cfg.learner.train_steps,
        cfg.learner.learning_rate,
        rng::derive(seed, 30),
    )?;
    let global_grad = mean_gradient(&model, &datasets);
    let rhos: Vec<f64> = datasets
        .iter()
        .map(|ds| {
            let local = mean_gradient(&model, std::slice::from_ref(ds));
            local
                .iter()
                .zip(&global_grad)
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt()
        })
        .collect();

    let devices: Vec<DeviceProfile> = datasets
        .iter()
        .enumerate()
        .map(|(i, ds)| DeviceProfile::new(i, ds.id_set(), types[i], rhos[i]))
        .collect();

    let instance = MarketInstance {
        devices,
        g_influence: leakage.g_influence.clone(),
        params: MarketParams {
            total_budget: cfg.market.budget_per_device * m as f64,
            k_levels: s.groups,
            comm_rounds: cfg.market.comm_rounds,
            unit_comm_cost: cfg.market.unit_comm_cost,
            constraints: ConstraintSet {
                rho_max: cfg.market.rho_max,
                coalition_cost_bound: cfg.market.coalition_cost_bound,
                phi_thresholds: vec![cfg.market.phi_threshold; m],
            },
            max_iters: cfg.market.max_iters,
        },
    };

    Ok(Scenario {
        datasets,
        leakage,
        types,
        instance,
        groups: (0..m).map(|i| i / s.devices_per_group).collect(),
    })
}

fn mean_gradient(model: &ModelParams, datasets: &[SellerDataset]) -> Vec<f64> {
    let dim = model.w.len();
    let mut grad = vec![0.0; dim];
    let total: usize = datasets.iter().map(SellerDataset::len).sum();
    for ds in datasets {
        for (x, y) in ds.features.iter().zip(&ds.labels) {
            let r: f64 = model.w.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() - y;
            for (g, v) in grad.iter_mut().zip(x) {
                *g += 2.0 * r * v / total as f64;
            }
        }
    }
    grad
}

/// Per-device cooperative payoffs (normalized value brackets) at the final
/// partition of a solve.
pub fn cooperative_payoffs(scenario: &Scenario, trace: &SolveTrace, cfg: &Config) -> Vec<f64> {
    let inst = &scenario.instance;
    let norm = payoff_normalizer(cfg);
    let mut payoffs = vec![0.0; inst.devices.len()];
    // Levels as discovered during the solve.
    let mut devices = inst.devices.clone();
    for (d, &lvl) in devices.iter_mut().zip(&trace.levels) {
        d.dtype.level = lvl;
    }
    for c in &trace.final_partition.coalitions {
        let a = assess_coalition(
            &c.members,
            c.type_level,
            c.budget,
            &devices,
            &inst.g_influence,
            &inst.params.constraints,
            inst.params.comm_rounds,
            inst.params.unit_comm_cost,
            None,
        );
        for (i, &dev) in a.members.iter().enumerate() {
            payoffs[dev] = a.member_values[i] / norm;
        }
    }
    payoffs
}

/// Run the full pipeline once: generate, discover, solve, price, report.
pub fn run_scenario(cfg: &Config, seed: u64) -> Result<ScenarioRun> {
    cfg.validate()?;
    if cfg.scenario.kind == ScenarioKind::DemoGame {
        let game = TableGame::four_device_demo();
        let start = Instant::now();
        let trace = game.solve(seed)?;
        let ms = start.elapsed().as_secs_f64() * 1e3;
        let payoffs: Vec<f64> = (0..game.num_devices)
            .map(|d| trace.final_prices[d])
            .collect();
        let sizes = trace
            .final_partition
            .coalitions
            .iter()
            .map(|c| c.members.len())
            .collect();
        let value_trace: Vec<f64> = trace.iterations.iter().map(|r| r.value_after).collect();
        let report = MetricsReport::new(
            "demo-game",
            payoffs,
            sizes,
            LeakageSummary {
                devices: game.num_devices,
                max_abs_offdiag: 0.0,
                mean_abs_offdiag: 0.0,
                undefined_pairs: 0,
            },
            ms,
            value_trace,
            trace.total_value,
        );
        return Ok(ScenarioRun { trace, report });
    }

    let scenario = build_scenario(cfg, seed)?;
    let start = Instant::now();
    let trace = majp_solve(&scenario.instance, seed)?;
    let ms = start.elapsed().as_secs_f64() * 1e3;

    let payoffs = cooperative_payoffs(&scenario, &trace, cfg);
    let sizes = trace
        .final_partition
        .coalitions
        .iter()
        .map(|c| c.members.len())
        .collect();
    let value_trace: Vec<f64> = trace.iterations.iter().map(|r| r.value_after).collect();
    let report = MetricsReport::new(
        "majp",
        payoffs,
        sizes,
        LeakageSummary::of(&scenario.leakage),
        ms,
        value_trace,
        trace.total_value,
    );
    Ok(ScenarioRun { trace, report })
}

/// Non-cooperative baseline outcome.
#[derive(Debug, Clone)]
pub struct BaselineOutcome {
    pub report: MetricsReport,
    /// The device-objective values: everyone else's market value plus own
    /// price, minus the sensitivity-weighted own exposed value.
    pub device_objectives: Vec<f64>,
}

/// Each device trades alone; the buyer applies leakage-based depression to
/// every seller whose data correlates with earlier arrivals (arrival order
/// follows device ids).
pub fn baseline_noncooperative(scenario: &Scenario, cfg: &Config) -> Result<BaselineOutcome> {
    let start = Instant::now();
    let inst = &scenario.instance;
    let m = inst.devices.len();
    let counts: Vec<usize> = inst.devices.iter().map(DeviceProfile::samples).collect();
    let total: usize = counts.iter().sum();
    let shares: Vec<f64> = counts.iter().map(|&n| n as f64 / total as f64).collect();
    let norm = payoff_normalizer(cfg);
    let p_ref = cfg.valuation.price_min;
    let b = cfg.valuation.b;
    let budget = inst.params.total_budget;

    let mut values = Vec::with_capacity(m);
    let mut payoffs = Vec::with_capacity(m);
    for dev in 0..m {
        let price = budget * counts[dev] as f64 / total as f64;
        let phi = inst.devices[dev].dtype.phi;
        let f_solo = (1.0 + phi).ln() / (1.0 + m as f64).ln();
        // Exposure accumulated from devices that traded earlier.
        let exposure: f64 = (0..dev).map(|i| inst.g_influence[i][dev]).sum();
        let g_eff = (cfg.market.delta * exposure).clamp(0.0, 1.0);
        let depressed = leakage_valuation(&shares, g_eff, b, p_ref)?;
        let undepressed = leakage_valuation(&shares, 0.0, b, p_ref)?;
        let ratio = depressed / undepressed;
        let value = (price + f_solo) * ratio;
        values.push(value);
        payoffs.push(value / norm);
    }

    let device_objectives: Vec<f64> = (0..m)
        .map(|dev| {
            let others: f64 = values
                .iter()
                .enumerate()
                .filter(|(i, _)| *i != dev)
                .map(|(_, v)| v)
                .sum();
            let price = budget * counts[dev] as f64 / total as f64;
            others + price - cfg.market.delta * values[dev]
        })
        .collect();

    let ms = start.elapsed().as_secs_f64() * 1e3;
    let total_value: f64 = values.iter().sum();
    let report = MetricsReport::new(
        "non-cooperative",
        payoffs,
        vec![1; m],
        LeakageSummary::of(&scenario.leakage),
        ms,
        Vec::new(),
        total_value,
    );
    Ok(BaselineOutcome {
        report,
        device_objectives,
    })
}

/// Aggregated statistics of repeated runs of one strategy.
#[derive(Debug, Clone, PartialEq)]
pub struct StrategyStats {
    pub mean_avg_payoff: f64,
    pub std_err: f64,
    pub mean_total_value: f64,
}

fn aggregate(avg_payoffs: &[f64], totals: &[f64]) -> StrategyStats {
    let n = avg_payoffs.len() as f64;
    let mean = avg_payoffs.iter().sum::<f64>() / n;
    let std_err = if avg_payoffs.len() > 1 {
        let var = avg_payoffs.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        var.sqrt() / n.sqrt()
    } else {
        0.0
    };
    StrategyStats {
        mean_avg_payoff: mean,
        std_err,
        mean_total_value: totals.iter().sum::<f64>() / n,
    }
}

/// Means and standard errors over seeded runs of both strategies. Seeds
/// fan out to a worker pool; aggregation is order-insensitive, so results
/// do not depend on the worker count.
pub fn monte_carlo(cfg: &Config, n_runs: usize, seed: u64) -> Result<(StrategyStats, StrategyStats)> {
    if n_runs == 0 {
        return Err(Error::InvalidInput("n_runs must be >= 1".into()));
    }
    let results: Result<Vec<(f64, f64, f64, f64)>> = (0..n_runs)
        .into_par_iter()
        .map(|i| {
            let run_seed = rng::derive(seed, i as u64);
            let scenario = build_scenario(cfg, run_seed)?;
            let trace = majp_solve(&scenario.instance, run_seed)?;
            let coop = cooperative_payoffs(&scenario, &trace, cfg);
            let coop_avg = coop.iter().sum::<f64>() / coop.len() as f64;
            let base = baseline_noncooperative(&scenario, cfg)?;
            Ok((
                coop_avg,
                trace.total_value,
                base.report.average_payoff,
                base.report.total_value,
            ))
        })
        .collect();
    let results = results?;
    let coop_avgs: Vec<f64> = results.iter().map(|r| r.0).collect();
    let coop_totals: Vec<f64> = results.iter().map(|r| r.1).collect();
    let base_avgs: Vec<f64> = results.iter().map(|r| r.2).collect();
    let base_totals: Vec<f64> = results.iter().map(|r| r.3).collect();
    Ok((
        aggregate(&coop_avgs, &coop_totals),
        aggregate(&base_avgs, &base_totals),
    ))
}

/// One row of the runtime comparison.
#[derive(Debug, Clone)]
pub struct RuntimeRow {
    pub devices: usize,
    pub majp_ms: f64,
    pub optimal_ms: Option<f64>,
}

fn median(xs: &mut [f64]) -> f64 {
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

/// Clone the config with the device count rescaled.
pub fn config_with_devices(cfg: &Config, devices: usize) -> Result<Config> {
    let mut c = cfg.clone();
    if devices % c.scenario.groups != 0 {
        return Err(Error::Config(format!(
            "device count {devices} is not divisible into {} groups",
            c.scenario.groups
        )));
    }
    c.scenario.devices_per_group = devices / c.scenario.groups;
    Ok(c)
}

/// Median wall-clock time of the heuristic solver (and the exhaustive
/// oracle, where the device count permits) over `reps` repetitions.
pub fn runtime_comparison(
    cfg: &Config,
    device_counts: &[usize],
    reps: usize,
    seed: u64,
) -> Result<Vec<RuntimeRow>> {
    let reps = reps.max(1);
    let mut rows = Vec::with_capacity(device_counts.len());
    for &m in device_counts {
        let cfg_m = config_with_devices(cfg, m)?;
        let scenario = build_scenario(&cfg_m, rng::derive(seed, m as u64))?;

        let mut majp_times = Vec::with_capacity(reps);
        for rep in 0..reps {
            let start = Instant::now();
            let _ = majp_solve(&scenario.instance, rng::derive(seed, rep as u64))?;
            majp_times.push(start.elapsed().as_secs_f64() * 1e3);
        }

        let optimal_ms = if m <= oracle::ENUMERATION_CAP {
            let mut times = Vec::with_capacity(reps);
            for _ in 0..reps {
                let start = Instant::now();
                let _ = oracle::optimal_partition(&scenario.instance)?;
                times.push(start.elapsed().as_secs_f64() * 1e3);
            }
            Some(median(&mut times))
        } else {
            None
        };

        rows.push(RuntimeRow {
            devices: m,
            majp_ms: median(&mut majp_times),
            optimal_ms,
        });
    }
    Ok(rows)
}

/// Least-squares slope of log(time) against log(devices).
pub fn loglog_growth_exponent(rows: &[RuntimeRow]) -> f64 {
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.majp_ms > 0.0)
        .map(|r| ((r.devices as f64).ln(), r.majp_ms.ln()))
        .collect();
    let n = pts.len() as f64;
    let mean_x = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_y = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mean_x) * (p.1 - mean_y)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mean_x).powi(2)).sum();
    sxy / sxx
}

// ---------------------------------------------------------------------------
// Figure recipes
// ---------------------------------------------------------------------------

/// Buyer valuation vs overlap volume for two amplitudes, with and without
/// the connectivity noise factor (noisy curves averaged over `runs`).
pub struct ValuationCurves {
    pub overlaps: Vec<usize>,
    /// (a0, noiseless curve, mean noisy curve).
    pub curves: Vec<(f64, Vec<f64>, Vec<f64>)>,
    pub checks: Vec<Check>,
}

pub fn recipe_valuation_curves(cfg: &Config, runs: usize, seed: u64) -> ValuationCurves {
    let overlaps: Vec<usize> = (0..5).collect();
    let runs = runs.max(1);
    let mut curves = Vec::new();
    for &a0 in &[0.2, 0.7] {
        let params = crate::valuation::ValuationParams {
            a0,
            ..cfg.valuation_params()
        };
        let clean = crate::valuation::scaled_valuation_curve(&params, false, &overlaps, seed);
        let mut noisy = vec![0.0; overlaps.len()];
        for r in 0..runs {
            let sample = crate::valuation::scaled_valuation_curve(
                &params,
                true,
                &overlaps,
                rng::derive(seed, r as u64),
            );
            for (acc, v) in noisy.iter_mut().zip(sample) {
                *acc += v / runs as f64;
            }
        }
        curves.push((a0, clean, noisy));
    }

    let mut checks = Vec::new();
    for (a0, clean, noisy) in &curves {
        let monotone = clean.windows(2).all(|w| w[0] <= w[1]);
        checks.push(Check::new(
            "noiseless curve non-decreasing in overlap",
            monotone,
            format!("a0={a0}"),
        ));
        let bounded = noisy
            .iter()
            .zip(clean)
            .all(|(n, c)| *n <= c + 1e-9);
        checks.push(Check::new(
            "noise lowers the expected valuation",
            bounded,
            format!("a0={a0}"),
        ));
    }
    let low_start = curves[0].1[0];
    let high_start = curves[1].1[0];
    checks.push(Check::new(
        "larger amplitude gives lower valuation at zero overlap",
        high_start < low_start,
        format!("a0=0.7 starts {high_start}, a0=0.2 starts {low_start}"),
    ));
    ValuationCurves {
        overlaps,
        curves,
        checks,
    }
}

/// Sequential correlation convergence on the three-seller linear
/// combination scenario.
pub struct CorrelationConvergence {
    pub matrix: LeakageMatrix,
    pub analytic_xz: f64,
    pub analytic_yz: f64,
    pub rounds: usize,
    pub checks: Vec<Check>,
}

pub fn recipe_correlation(cfg: &Config, rounds: usize, seed: u64) -> Result<CorrelationConvergence> {
    let data = crate::synth::make_three_seller_scenario(0.0, 1.0, 0.0, 1.0, rounds, seed)?;
    let streams: Vec<Vec<f64>> = data.iter().map(|d| d.signal_stream()).collect();
    let matrix = sequential_correlation_estimate(&streams, cfg.leakage.tolerance)?;
    let analytic_xz = 0.5 / 1.25f64.sqrt();
    let analytic_yz = 1.0 / 1.25f64.sqrt();
    let tol = cfg.leakage.tolerance;
    let err_xz = (matrix.r[0][2] - analytic_xz).abs();
    let err_yz = (matrix.r[1][2] - analytic_yz).abs();
    let checks = vec![
        Check::new(
            "X-Z estimate within tolerance of analytic value",
            err_xz < tol,
            format!("|{} - {analytic_xz}| = {err_xz}", matrix.r[0][2]),
        ),
        Check::new(
            "Y-Z estimate within tolerance of analytic value",
            err_yz < tol,
            format!("|{} - {analytic_yz}| = {err_yz}", matrix.r[1][2]),
        ),
        Check::new(
            "both pairs recorded a finite convergence round",
            matrix.rounds_to_converge[0][2].is_some() && matrix.rounds_to_converge[1][2].is_some(),
            format!(
                "xz={:?} yz={:?}",
                matrix.rounds_to_converge[0][2], matrix.rounds_to_converge[1][2]
            ),
        ),
    ];
    Ok(CorrelationConvergence {
        matrix,
        analytic_xz,
        analytic_yz,
        rounds,
        checks,
    })
}

/// Value depression across trading rounds.
pub fn recipe_depression(cfg: &Config) -> Result<(DepressionSeries, Vec<Check>)> {
    let series = value_depression_series(
        &cfg.scenario.depression_sample_counts,
        &cfg.price_grid(),
        &cfg.valuation.leakage_rounds,
        cfg.valuation.b,
    )?;
    let mut checks = Vec::new();
    let late = &series.curves[1];
    let mut rounds_ordered = true;
    for r in 1..late.len() {
        for (prev, cur) in late[r - 1].iter().zip(&late[r]) {
            if cur > prev {
                rounds_ordered = false;
            }
        }
    }
    checks.push(Check::new(
        "late seller's curves non-increasing across rounds",
        rounds_ordered,
        format!("rounds={:?}", series.g_rounds),
    ));
    let mut price_monotone = true;
    for seller in &series.curves {
        for round in seller {
            if !round.windows(2).all(|w| w[1] > w[0]) {
                price_monotone = false;
            }
        }
    }
    checks.push(Check::new(
        "every curve strictly increases in price",
        price_monotone,
        format!("prices {}..{}", cfg.valuation.price_min, cfg.valuation.price_max),
    ));
    Ok((series, checks))
}

/// Per-device utility against a continuous placement sweep.
pub struct UtilitySweep {
    /// x grid over [1, groups].
    pub xs: Vec<f64>,
    /// One curve per device: raw utilities interpolated over `xs`.
    pub raw: Vec<Vec<f64>>,
    /// Affinely normalized to [0, 1] across all curves.
    pub normalized: Vec<Vec<f64>>,
    pub home_group: Vec<usize>,
    pub checks: Vec<Check>,
}

/// Utility of each device when hypothetically placed in each group's
/// coalition: exposure to correlated peers left outside a placement
/// lowers the priced term, so utility peaks at the device's own group and
/// decays with group distance.
pub fn recipe_utility_sweep(cfg: &Config, seed: u64) -> Result<UtilitySweep> {
    let mut cfg9 = cfg.clone();
    // Five groups arranged on a correlation gradient.
    cfg9.scenario.groups = 5;
    cfg9.scenario.devices_per_group = 4;
    cfg9.scenario.within_group_correlation = 0.6;
    cfg9.scenario.group_correlation_decay = 0.5;
    cfg9.scenario.samples_per_device = 2_000;
    cfg9.scenario.xi_levels = vec![0.1, 0.3, 0.5, 0.7, 0.9];
    cfg9.validate()?;

    let scenario = build_scenario(&cfg9, seed)?;
    let inst = &scenario.instance;
    let m = inst.devices.len();
    let k = cfg9.scenario.groups;
    let ng = cfg9.scenario.devices_per_group;
    let g = &inst.g_influence;
    let price = inst.params.total_budget / m as f64;

    // Placement utilities at integer group positions.
    let mut placement = vec![vec![0.0; k]; m];
    for dev in 0..m {
        let home = scenario.groups[dev];
        let total_influence: f64 = (0..m).filter(|&i| i != dev).map(|i| g[i][dev]).sum();
        for target in 0..k {
            let members: Vec<usize> = (target * ng..(target + 1) * ng)
                .filter(|&i| i != dev)
                .collect();
            let absorbed: f64 = members.iter().map(|&i| g[i][dev]).sum();
            let exposure = total_influence - absorbed;
            let phi_sum: f64 = members
                .iter()
                .map(|&i| inst.devices[i].dtype.phi)
                .sum::<f64>()
                + inst.devices[dev].dtype.phi;
            let size = members.len() + 1;
            let gain = (1.0 + phi_sum).ln() / (1.0 + m as f64).ln();
            let comm = crate::leakage::coalition_cost(
                size,
                inst.params.comm_rounds,
                inst.params.unit_comm_cost,
            );
            placement[dev][target] = price * (1.0 - exposure) + gain - comm;
            let _ = home;
        }
    }

    // 21-point sweep with linear interpolation between integer placements.
    let xs: Vec<f64> = (0..21).map(|i| 1.0 + 4.0 * i as f64 / 20.0).collect();
    let raw: Vec<Vec<f64>> = (0..m)
        .map(|dev| {
            xs.iter()
                .map(|&x| {
                    let lo = (x.floor() as usize - 1).min(k - 1);
                    let hi = (x.ceil() as usize - 1).min(k - 1);
                    let t = x - x.floor();
                    placement[dev][lo] * (1.0 - t) + placement[dev][hi] * t
                })
                .collect()
        })
        .collect();

    let global_max = raw.iter().flatten().copied().fold(f64::MIN, f64::max);
    let global_min = raw.iter().flatten().copied().fold(f64::MAX, f64::min);
    let span = (global_max - global_min).max(1e-12);
    let normalized = raw
        .iter()
        .map(|curve| curve.iter().map(|v| (v - global_min) / span).collect())
        .collect();

    let mut peak_ok = true;
    let mut decay_ok = true;
    for dev in 0..m {
        let home = scenario.groups[dev];
        let best = (0..k)
            .max_by(|&a, &b| placement[dev][a].partial_cmp(&placement[dev][b]).unwrap())
            .unwrap();
        if best != home {
            peak_ok = false;
        }
        for t in 1..k {
            // Moving further from home never raises utility.
            if t <= home && placement[dev][home - t] > placement[dev][home - t + 1] + 1e-12 {
                decay_ok = false;
            }
            if home + t < k && placement[dev][home + t] > placement[dev][home + t - 1] + 1e-12 {
                decay_ok = false;
            }
        }
    }
    let checks = vec![
        Check::new("utility peaks at the device's own group", peak_ok, String::new()),
        Check::new(
            "utility decays moving away from the own group",
            decay_ok,
            String::new(),
        ),
    ];

    Ok(UtilitySweep {
        xs,
        raw,
        normalized,
        home_group: scenario.groups.clone(),
        checks,
    })
}

/// Cooperative-vs-baseline comparison across market sizes.
pub struct ComparisonTable {
    pub rows: Vec<(usize, StrategyStats, StrategyStats)>,
    pub checks: Vec<Check>,
}

pub fn recipe_comparison(
    cfg: &Config,
    device_counts: &[usize],
    runs: usize,
    seed: u64,
) -> Result<ComparisonTable> {
    let mut rows = Vec::with_capacity(device_counts.len());
    for &m in device_counts {
        let cfg_m = config_with_devices(cfg, m)?;
        let (coop, base) = monte_carlo(&cfg_m, runs, rng::derive(seed, m as u64))?;
        rows.push((m, coop, base));
    }

    let mut checks = Vec::new();
    let dominance = rows.iter().all(|(_, c, b)| c.mean_avg_payoff > b.mean_avg_payoff);
    checks.push(Check::new(
        "cooperative mean payoff exceeds baseline at every size",
        dominance,
        rows.iter()
            .map(|(m, c, b)| format!("M={m}: {:.4} vs {:.4}", c.mean_avg_payoff, b.mean_avg_payoff))
            .collect::<Vec<_>>()
            .join("; "),
    ));
    let mut widening = true;
    let mut last_gap = f64::NEG_INFINITY;
    for (_, c, b) in &rows {
        let gap = c.mean_avg_payoff - b.mean_avg_payoff;
        if gap < last_gap - 1e-9 {
            widening = false;
        }
        last_gap = gap;
    }
    checks.push(Check::new(
        "payoff gap non-decreasing in market size",
        widening,
        String::new(),
    ));
    if let Some((m, coop, base)) = rows.last() {
        checks.push(Check::new(
            "cooperative payoff at the largest size inside [0.67, 0.77]",
            (0.67..=0.77).contains(&coop.mean_avg_payoff),
            format!("M={m}: {:.4}", coop.mean_avg_payoff),
        ));
        checks.push(Check::new(
            "baseline payoff at the largest size inside [0.51, 0.61]",
            (0.51..=0.61).contains(&base.mean_avg_payoff),
            format!("M={m}: {:.4}", base.mean_avg_payoff),
        ));
    }
    Ok(ComparisonTable { rows, checks })
}

/// Runtime table plus the ordinal checks.
pub fn recipe_runtime(cfg: &Config, seed: u64) -> Result<(Vec<RuntimeRow>, Vec<Check>)> {
    let with_oracle = runtime_comparison(cfg, &[10, 12], 5, seed)?;
    let sweep = runtime_comparison(cfg, &[10, 20, 40, 80], 3, rng::derive(seed, 1))?;

    let mut checks = Vec::new();
    for row in &with_oracle {
        let opt = row.optimal_ms.unwrap_or(f64::INFINITY);
        checks.push(Check::new(
            "heuristic faster than exhaustive search",
            row.majp_ms < opt,
            format!("M={}: {:.3} ms vs {:.3} ms", row.devices, row.majp_ms, opt),
        ));
    }
    let exponent = loglog_growth_exponent(&sweep);
    checks.push(Check::new(
        "heuristic log-log growth exponent below 2",
        exponent < 2.0,
        format!("exponent = {exponent:.3}"),
    ));

    let mut rows = with_oracle;
    rows.extend(sweep);
    Ok((rows, checks))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn small_cfg() -> Config {
        let mut cfg = Config::default();
        cfg.scenario.devices_per_group = 3;
        cfg.scenario.samples_per_device = 30;
        cfg
    }

    #[test]
    fn scenario_build_is_deterministic() {
        let cfg = small_cfg();
        let a = build_scenario(&cfg, 7).unwrap();
        let b = build_scenario(&cfg, 7).unwrap();
        assert_eq!(a.datasets, b.datasets);
        assert_eq!(a.types, b.types);
        assert_eq!(a.instance.g_influence, b.instance.g_influence);
    }

    #[test]
    fn run_scenario_reports_are_reproducible() {
        let cfg = small_cfg();
        let a = run_scenario(&cfg, 3).unwrap();
        let b = run_scenario(&cfg, 3).unwrap();
        // Everything except wall-clock timing must match bit-for-bit.
        assert_eq!(a.report.per_device_payoff, b.report.per_device_payoff);
        assert_eq!(a.report.average_payoff, b.report.average_payoff);
        assert_eq!(a.report.coalition_sizes, b.report.coalition_sizes);
        assert_eq!(a.report.value_trace, b.report.value_trace);
        assert_eq!(a.report.total_value, b.report.total_value);
        assert_eq!(a.trace.final_prices, b.trace.final_prices);
    }

    #[test]
    fn group_xi_levels_give_distinct_type_levels() {
        let cfg = small_cfg();
        let s = build_scenario(&cfg, 5).unwrap();
        // With the default batch size of 1 the first-sample contribution is
        // total, so phi tracks xi and groups land in their own levels.
        for (i, t) in s.types.iter().enumerate() {
            let group = s.groups[i];
            assert_eq!(t.level, group + 1, "device {i}: {t:?}");
        }
    }

    #[test]
    fn baseline_equals_singleton_cooperative_when_clean() {
        // No correlation, no communication costs: the baseline payoff per
        // device equals the cooperative bracket in a singleton partition.
        let mut cfg = small_cfg();
        cfg.market.unit_comm_cost = 0.0;
        let scenario = build_scenario(&cfg, 11).unwrap();
        let base = baseline_noncooperative(&scenario, &cfg).unwrap();

        let inst = &scenario.instance;
        let m = inst.devices.len();
        let norm = payoff_normalizer(&cfg);
        for dev in 0..m {
            let members: BTreeSet<usize> = [dev].into_iter().collect();
            let budget = inst.params.total_budget * inst.devices[dev].samples() as f64
                / inst.devices.iter().map(DeviceProfile::samples).sum::<usize>() as f64;
            let a = assess_coalition(
                &members,
                inst.devices[dev].dtype.level,
                budget,
                &inst.devices,
                &inst.g_influence,
                &inst.params.constraints,
                inst.params.comm_rounds,
                inst.params.unit_comm_cost,
                None,
            );
            assert_abs_diff_eq!(
                base.report.per_device_payoff[dev],
                a.member_values[0] / norm,
                epsilon = 1e-9
            );
        }
    }

    #[test]
    fn baseline_payoff_decreases_with_synthetic_influence() {
        let cfg = small_cfg();
        let mut scenario = build_scenario(&cfg, 13).unwrap();
        let clean = baseline_noncooperative(&scenario, &cfg).unwrap();

        let m = scenario.instance.devices.len();
        for i in 0..m {
            for j in 0..m {
                if i != j {
                    scenario.instance.g_influence[i][j] = 0.8;
                }
            }
        }
        let leaky = baseline_noncooperative(&scenario, &cfg).unwrap();
        // First arrival has no earlier peers; everyone else is depressed.
        assert_abs_diff_eq!(
            leaky.report.per_device_payoff[0],
            clean.report.per_device_payoff[0],
            epsilon = 1e-12
        );
        for dev in 1..m {
            assert!(
                leaky.report.per_device_payoff[dev] < clean.report.per_device_payoff[dev],
                "device {dev}"
            );
        }
    }

    #[test]
    fn monte_carlo_single_run_matches_direct_run() {
        let cfg = small_cfg();
        let (coop, base) = monte_carlo(&cfg, 1, 9).unwrap();
        assert_eq!(coop.std_err, 0.0);
        assert_eq!(base.std_err, 0.0);

        let run_seed = rng::derive(9, 0);
        let scenario = build_scenario(&cfg, run_seed).unwrap();
        let trace = majp_solve(&scenario.instance, run_seed).unwrap();
        let payoffs = cooperative_payoffs(&scenario, &trace, &cfg);
        let avg = payoffs.iter().sum::<f64>() / payoffs.len() as f64;
        assert_abs_diff_eq!(coop.mean_avg_payoff, avg, epsilon = 1e-12);
    }

    #[test]
    fn depression_recipe_checks_pass() {
        let cfg = Config::default();
        let (_, checks) = recipe_depression(&cfg).unwrap();
        assert!(checks.iter().all(|c| c.pass), "{checks:?}");
    }

    #[test]
    fn valuation_curve_recipe_checks_pass() {
        let cfg = Config::default();
        let out = recipe_valuation_curves(&cfg, 50, 3);
        assert!(out.checks.iter().all(|c| c.pass), "{:?}", out.checks);
    }

    #[test]
    fn demo_game_scenario_runs() {
        let mut cfg = Config::default();
        cfg.scenario.kind = ScenarioKind::DemoGame;
        let run = run_scenario(&cfg, 1).unwrap();
        assert_abs_diff_eq!(run.report.total_value, 2.0, epsilon = 1e-12);
    }
}

#[cfg(test)]
mod calibration_probe {
    use super::*;

    #[test]
    #[ignore]
    fn probe_runtime_rows() {
        let cfg = Config::default();
        let (rows, checks) = recipe_runtime(&cfg, 7).unwrap();
        for r in &rows {
            println!("M={} majp {:.3} ms optimal {:?}", r.devices, r.majp_ms, r.optimal_ms);
        }
        for c in &checks {
            println!("check [{}] {} {}", if c.pass { "PASS" } else { "FAIL" }, c.name, c.detail);
        }
    }

    #[test]
    #[ignore]
    fn probe_timing() {
        let cfg = config_with_devices(&Config::default(), 40).unwrap();
        let t0 = Instant::now();
        let scenario = build_scenario(&cfg, 1).unwrap();
        println!("build: {:?}", t0.elapsed());
        let t1 = Instant::now();
        let trace = majp_solve(&scenario.instance, 1).unwrap();
        println!("solve: {:?} switches {} coalitions {:?}", t1.elapsed(), trace.iterations.len(),
                 trace.final_partition.coalitions.iter().map(|c| c.members.len()).collect::<Vec<_>>());
        let t2 = Instant::now();
        let _ = baseline_noncooperative(&scenario, &cfg).unwrap();
        println!("baseline: {:?}", t2.elapsed());
    }

    #[test]
    #[ignore]
    fn probe_fig11() {
        let cfg = Config::default();
        let table = recipe_comparison(&cfg, &[10, 20, 30, 40], 100, 11).unwrap();
        for (m, c, b) in &table.rows {
            println!(
                "M={m}: coop {:.4} (se {:.4}) base {:.4} (se {:.4}) gap {:.4}",
                c.mean_avg_payoff, c.std_err, b.mean_avg_payoff, b.std_err,
                c.mean_avg_payoff - b.mean_avg_payoff
            );
        }
        for ch in &table.checks {
            println!("check [{}] {} {}", if ch.pass { "PASS" } else { "FAIL" }, ch.name, ch.detail);
        }
    }
}

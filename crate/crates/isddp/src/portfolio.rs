//! Seeded portfolio-rebalancing instances and a paired policy comparison.
//!
//! Stage `t` starts from the holdings `w_{t−1}` (risky assets, then cash),
//! applies the stage's gross returns `r_t`, and rebalances. Stage variables,
//! in order, are
//!
//! ```text
//! w_1..w_n, w_cash, buy_1..buy_n, sell_1..sell_n, slack_1..slack_n
//! ```
//!
//! with rows
//!
//! ```text
//! w_i − buy_i + sell_i                          = r_i · w_{t−1,i}
//! w_cash + Σ(1 + ν_i) buy_i − Σ(1 − ν_i) sell_i = r_f · w_{t−1,cash}
//! w_i − u · Σ_k w_k + slack_i                   = 0
//! ```
//!
//! and cost `−Σ_k w_k` at the last stage only, so the objective is minus the
//! expected final wealth. Selling everything into cash is always feasible and
//! wealth is bounded by the returns, so every stage problem is feasible and
//! bounded from any reachable state.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::model::{MultistageModel, StageFan, StageRealization};
use crate::sddp::{self, ErrorSchedule, RunOptions, RunReport, SddpError, StoppingRule, UpperBoundMode};

const STREAM_SIMULATION: u64 = 3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PortfolioConfig {
    /// Realizations per stage after the first.
    pub m: usize,
    pub horizon: usize,
    /// Risky assets.
    pub n: usize,
    pub seed: u64,
    pub risk_free_return: f64,
    pub position_cap: f64,
    pub cost_base: f64,
    pub cost_amp: f64,
}

impl PortfolioConfig {
    pub fn new(m: usize, horizon: usize, n: usize, seed: u64) -> Self {
        PortfolioConfig {
            m,
            horizon,
            n,
            seed,
            risk_free_return: 1.01,
            position_cap: 0.2,
            cost_base: 0.08,
            cost_amp: 0.06,
        }
    }

    /// Number of variables per stage.
    pub fn stage_dim(&self) -> usize {
        4 * self.n + 1
    }
}

/// Sampled market data behind an instance.
#[derive(Debug, Clone, PartialEq)]
pub struct MarketData {
    pub means: Vec<f64>,
    pub std_devs: Vec<f64>,
    /// `returns[t − 1][j][i]`.
    pub returns: Vec<Vec<Vec<f64>>>,
    /// `costs[t − 1][i]`, shared by buying and selling.
    pub costs: Vec<Vec<f64>>,
    pub initial: Vec<f64>,
}

/// Sample market data for `config`.
pub fn sample_market(config: &PortfolioConfig) -> MarketData {
    let n = config.n;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let means: Vec<f64> = (0..n).map(|_| rng.random_range(0.9..=1.4)).collect();
    let std_devs: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..=0.2)).collect();
    let initial: Vec<f64> = (0..=n).map(|_| rng.random_range(0.0..=10.0)).collect();
    let t_len = config.horizon as f64;
    let costs: Vec<Vec<f64>> = (0..config.horizon)
        .map(|_| {
            (0..n)
                .map(|_| {
                    let u = rng.random_range(1..=config.horizon) as f64;
                    config.cost_base + config.cost_amp * (2.0 * std::f64::consts::PI * u / t_len).cos()
                })
                .collect()
        })
        .collect();
    let dists: Vec<Normal<f64>> =
        means.iter().zip(&std_devs).map(|(&m, &s)| Normal::new(m, s).expect("positive deviation")).collect();
    let returns = (1..=config.horizon)
        .map(|t| {
            let fan = if t == 1 { 1 } else { config.m };
            (0..fan).map(|_| dists.iter().map(|d| d.sample(&mut rng).max(0.0)).collect()).collect()
        })
        .collect();
    MarketData { means, std_devs, returns, costs, initial }
}

/// Build the rebalancing model for `config`.
pub fn generate_instance(config: &PortfolioConfig) -> MultistageModel {
    build_model(config, &sample_market(config))
}

/// Build the rebalancing model from given market data.
pub fn build_model(config: &PortfolioConfig, market: &MarketData) -> MultistageModel {
    let n = config.n;
    let dim = config.stage_dim();
    let rows = 2 * n + 1;
    let u = config.position_cap;
    let mut stages = Vec::with_capacity(config.horizon);
    for t in 1..=config.horizon {
        let nu = &market.costs[t - 1];
        let mut a = DMatrix::zeros(rows, dim);
        for i in 0..n {
            a[(i, i)] = 1.0;
            a[(i, n + 1 + i)] = -1.0;
            a[(i, 2 * n + 1 + i)] = 1.0;
            a[(n, n + 1 + i)] = 1.0 + nu[i];
            a[(n, 2 * n + 1 + i)] = -(1.0 - nu[i]);
            let cap_row = n + 1 + i;
            for k in 0..=n {
                a[(cap_row, k)] = -u;
            }
            a[(cap_row, i)] += 1.0;
            a[(cap_row, 3 * n + 1 + i)] = 1.0;
        }
        a[(n, n)] = 1.0;
        let prev_dim = if t == 1 { n + 1 } else { dim };
        let mut cost = DVector::zeros(dim);
        if t == config.horizon {
            for k in 0..=n {
                cost[k] = -1.0;
            }
        }
        let fan = &market.returns[t - 1];
        let realizations = fan
            .iter()
            .map(|r| {
                let mut b_mat = DMatrix::zeros(rows, prev_dim);
                for i in 0..n {
                    b_mat[(i, i)] = -r[i];
                }
                b_mat[(n, n)] = -config.risk_free_return;
                StageRealization {
                    a: a.clone(),
                    b_mat,
                    rhs: DVector::zeros(rows),
                    cost: cost.clone(),
                    probability: 1.0 / fan.len() as f64,
                }
            })
            .collect();
        stages.push(StageFan { stage_index: t, realizations });
    }
    MultistageModel::new(stages, DVector::from_vec(market.initial.clone()))
        .expect("generated portfolio models are well formed")
}

/// Paired comparison of two schedules run on the same sampled scenarios.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonReport {
    /// `100 · (cost_b − cost_a) / |cost_a|` over the simulation scenarios.
    pub policy_gap_percent: f64,
    /// `100 · (pivots_a − pivots_b) / pivots_a`.
    pub work_reduction_percent: f64,
    pub cost_mean_a: f64,
    pub cost_mean_b: f64,
    pub pivots_a: usize,
    pub pivots_b: usize,
    pub iterations: usize,
    pub run_a: RunReport,
    pub run_b: RunReport,
}

/// Options shared by both runs of a comparison: a fixed iteration count and
/// no early stop.
pub fn comparison_options(iters: usize, threads: Option<usize>) -> RunOptions {
    RunOptions {
        stopping: StoppingRule { gap_tol: f64::NEG_INFINITY, max_iters: iters, ub_every: 1 },
        upper_bound: UpperBoundMode::Window { samples: 100 },
        confidence: 0.975,
        threads,
        initial_bounds: None,
        record_time: false,
    }
}

/// Run both schedules for `iters` iterations from the same seed, then
/// simulate both policies on the same `sim_scenarios` scenarios.
pub fn compare_policies(
    model: &MultistageModel,
    schedule_a: &ErrorSchedule,
    schedule_b: &ErrorSchedule,
    iters: usize,
    sim_scenarios: usize,
    seed: u64,
) -> Result<ComparisonReport, SddpError> {
    compare_with(model, schedule_a, schedule_b, &comparison_options(iters, None), sim_scenarios, seed)
}

pub fn compare_with(
    model: &MultistageModel,
    schedule_a: &ErrorSchedule,
    schedule_b: &ErrorSchedule,
    options: &RunOptions,
    sim_scenarios: usize,
    seed: u64,
) -> Result<ComparisonReport, SddpError> {
    let run_a = sddp::run(model, schedule_a, options, seed)?;
    let run_b = sddp::run(model, schedule_b, options, seed)?;
    finish_comparison(model, run_a, run_b, sim_scenarios, seed)
}

fn finish_comparison(
    model: &MultistageModel,
    run_a: RunReport,
    run_b: RunReport,
    sim_scenarios: usize,
    seed: u64,
) -> Result<ComparisonReport, SddpError> {
    let scenarios = simulation_scenarios(model, sim_scenarios, seed);
    let mean = |r: &RunReport| -> Result<f64, SddpError> {
        let costs = r.policy.evaluate(model, &scenarios)?;
        Ok(costs.iter().sum::<f64>() / costs.len().max(1) as f64)
    };
    let cost_mean_a = mean(&run_a)?;
    let cost_mean_b = mean(&run_b)?;
    let pivots_a = run_a.total_pivots();
    let pivots_b = run_b.total_pivots();
    let policy_gap_percent =
        if cost_mean_a == 0.0 { 0.0 } else { 100.0 * (cost_mean_b - cost_mean_a) / cost_mean_a.abs() };
    let work_reduction_percent =
        if pivots_a == 0 { 0.0 } else { 100.0 * (pivots_a as f64 - pivots_b as f64) / pivots_a as f64 };
    Ok(ComparisonReport {
        policy_gap_percent,
        work_reduction_percent,
        cost_mean_a,
        cost_mean_b,
        pivots_a,
        pivots_b,
        iterations: run_a.records.len(),
        run_a,
        run_b,
    })
}

/// Scenarios shared by both policies in a comparison.
pub fn simulation_scenarios(model: &MultistageModel, count: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(STREAM_SIMULATION);
    (0..count).map(|_| sddp::sample_scenario(model, &mut rng)).collect()
}

/// SDDP against the cap-table variant, with `I_max` taken from the largest
/// Phase-2 pivot count the exact run needed for a single subproblem.
pub fn bench_sddp_vs_isddp(
    model: &MultistageModel,
    iters: usize,
    sim_scenarios: usize,
    seed: u64,
    threads: Option<usize>,
) -> Result<(ComparisonReport, usize), SddpError> {
    let options = comparison_options(iters, threads);
    let run_a = sddp::run(model, &ErrorSchedule::Exact, &options, seed)?;
    let i_max = run_a.max_phase2_pivots().max(1);
    let run_b = sddp::run(model, &ErrorSchedule::PivotCapTable { i_max }, &options, seed)?;
    Ok((finish_comparison(model, run_a, run_b, sim_scenarios, seed)?, i_max))
}

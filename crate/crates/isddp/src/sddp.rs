//! SDDP and its inexact variant.
//!
//! Each iteration samples one trajectory forward, solving stage problems to
//! the accuracy the [`ErrorSchedule`] asks for, then sweeps back from the last
//! stage and appends one aggregated cut per stage. Backward subproblems are
//! solved with the dual simplex so that every cut comes from a dual-feasible
//! vertex, whatever the pivot cap.

use std::time::Instant;

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

use crate::cuts::{build_cut_from_duals, extend_stage_lp, Cut, CutError, CutPool, StageDual};
use crate::lp::{self, LinearProgram, LpError, LpSolveOutcome, LpStatus, PivotLimit};
use crate::model::{MultistageModel, ModelError};

const STREAM_FORWARD: u64 = 1;
const STREAM_UPPER: u64 = 2;

#[derive(Debug, Error)]
pub enum SddpError {
    #[error("stage {stage} subproblem for realization {realization} is infeasible")]
    SubproblemInfeasible { stage: usize, realization: usize },
    #[error("stage {stage} subproblem for realization {realization} is unbounded")]
    SubproblemUnbounded { stage: usize, realization: usize },
    #[error("no finite lower bound on stage {stage} costs; supply initial bounds")]
    NoLowerBound { stage: usize },
    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),
    #[error("invalid options: {0}")]
    InvalidOptions(String),
    #[error(transparent)]
    Lp(#[from] LpError),
    #[error(transparent)]
    Cut(#[from] CutError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// How accurately stage subproblems are solved at stage `t`, iteration `k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ErrorSchedule {
    Exact,
    /// `δ_t^k = δ̄`, `ε_t^k = ε̄`.
    ConstantAbsolute { delta: f64, eps: f64 },
    /// `(1/k)[ε̄ − (ε̄ − ε₀)(t − 2)/(T − 2)]`, relative to `max(1, |value|)`.
    RelativeDecay { eps_bar: f64, eps0: f64 },
    /// `δ_t^k = ε_t^k = c / k^p`.
    VanishingAbsolute { c: f64, exponent: f64 },
    /// Pivot caps growing with the stage and the iteration band.
    PivotCapTable { i_max: usize },
}

/// Accuracy requested for one solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StageAccuracy {
    Exact,
    /// Stop once within `delta` (forward) or `eps` (backward) of the optimum.
    Absolute { delta: f64, eps: f64 },
    /// Absolute error `rel · max(1, |optimum|)`.
    Relative(f64),
    Cap(usize),
}

/// Leading fraction of the cap table for iteration `k`.
pub fn cap_table_base(k: usize) -> f64 {
    match k {
        0..=20 => 0.4,
        21..=50 => 0.45,
        51..=100 => 0.5,
        101..=200 => 0.55,
        201..=300 => 0.6,
        301..=400 => 0.65,
        401..=500 => 0.7,
        501..=600 => 0.75,
        601..=700 => 0.8,
        701..=800 => 0.85,
        801..=900 => 0.9,
        _ => 1.0,
    }
}

fn stage_fraction(t: usize, horizon: usize) -> f64 {
    if horizon <= 2 {
        1.0
    } else {
        (t as f64 - 2.0) / (horizon as f64 - 2.0)
    }
}

impl ErrorSchedule {
    pub fn validate(&self) -> Result<(), SddpError> {
        let bad = |m: String| Err(SddpError::InvalidSchedule(m));
        match *self {
            ErrorSchedule::Exact => Ok(()),
            ErrorSchedule::ConstantAbsolute { delta, eps } => {
                if delta >= 0.0 && eps >= 0.0 && delta.is_finite() && eps.is_finite() {
                    Ok(())
                } else {
                    bad(format!("errors must be finite and nonnegative, got δ={delta}, ε={eps}"))
                }
            }
            ErrorSchedule::RelativeDecay { eps_bar, eps0 } => {
                if eps0 >= 0.0 && eps0 < eps_bar && eps_bar.is_finite() {
                    Ok(())
                } else {
                    bad(format!("need 0 ≤ ε₀ < ε̄, got ε̄={eps_bar}, ε₀={eps0}"))
                }
            }
            ErrorSchedule::VanishingAbsolute { c, exponent } => {
                if c >= 0.0 && exponent > 0.0 && c.is_finite() && exponent.is_finite() {
                    Ok(())
                } else {
                    bad(format!("need c ≥ 0 and p > 0, got c={c}, p={exponent}"))
                }
            }
            ErrorSchedule::PivotCapTable { i_max } => {
                if i_max >= 1 {
                    Ok(())
                } else {
                    bad("I_max must be at least 1".into())
                }
            }
        }
    }

    /// Requested relative error; stage 1 is always exact.
    pub fn relative_error(&self, t: usize, k: usize, horizon: usize) -> Option<f64> {
        match *self {
            ErrorSchedule::RelativeDecay { eps_bar, eps0 } if t >= 2 => {
                let f = stage_fraction(t, horizon);
                Some((eps_bar - (eps_bar - eps0) * f) / k.max(1) as f64)
            }
            ErrorSchedule::RelativeDecay { .. } => Some(0.0),
            _ => None,
        }
    }

    /// `⌈(a + (1 − a)(t − 2)/(T − 2)) I_max⌉` for stages `t ≥ 2`; `None` means
    /// uncapped.
    pub fn pivot_cap(&self, t: usize, k: usize, horizon: usize) -> Option<usize> {
        match *self {
            ErrorSchedule::PivotCapTable { i_max } if t >= 2 && i_max != usize::MAX => {
                let a = cap_table_base(k);
                let frac = a + (1.0 - a) * stage_fraction(t, horizon);
                Some((frac * i_max as f64 - 1e-9).ceil() as usize)
            }
            _ => None,
        }
    }

    pub fn accuracy(&self, t: usize, k: usize, horizon: usize) -> StageAccuracy {
        if t <= 1 {
            return StageAccuracy::Exact;
        }
        match *self {
            ErrorSchedule::Exact => StageAccuracy::Exact,
            ErrorSchedule::ConstantAbsolute { delta, eps } => StageAccuracy::Absolute { delta, eps },
            ErrorSchedule::RelativeDecay { .. } => {
                StageAccuracy::Relative(self.relative_error(t, k, horizon).unwrap_or(0.0))
            }
            ErrorSchedule::VanishingAbsolute { c, exponent } => {
                let e = c / (k.max(1) as f64).powf(exponent);
                StageAccuracy::Absolute { delta: e, eps: e }
            }
            ErrorSchedule::PivotCapTable { .. } => match self.pivot_cap(t, k, horizon) {
                Some(cap) => StageAccuracy::Cap(cap),
                None => StageAccuracy::Exact,
            },
        }
    }
}

/// Cut pools for stages `2..=T`; together they define the policy.
#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    pub pools: Vec<CutPool>,
}

impl Policy {
    /// Pools holding only the initial lower-bounding cuts.
    pub fn initial(model: &MultistageModel, bounds: &[f64]) -> Result<Self, SddpError> {
        if bounds.len() != model.horizon - 1 {
            return Err(SddpError::InvalidOptions(format!(
                "{} initial bounds for {} stages",
                bounds.len(),
                model.horizon - 1
            )));
        }
        let pools = (2..=model.horizon)
            .map(|t| CutPool::with_lower_bound(t, model.dim(t - 1), bounds[t - 2]))
            .collect();
        Ok(Policy { pools })
    }

    /// Rebuild a policy from a cut dump. The lowest-iteration cut of each
    /// stage seeds its pool; each stage `2..=T` needs at least one cut.
    pub fn from_cuts(model: &MultistageModel, mut cuts: Vec<Cut>) -> Result<Self, SddpError> {
        cuts.sort_by_key(|c| (c.stage, c.iteration));
        let mut pools: Vec<Option<CutPool>> = vec![None; model.horizon.saturating_sub(1)];
        for cut in cuts {
            let slot = cut
                .stage
                .checked_sub(2)
                .and_then(|i| pools.get_mut(i))
                .ok_or_else(|| SddpError::InvalidOptions(format!("cut for stage {} outside 2..={}", cut.stage, model.horizon)))?;
            match slot {
                Some(pool) => pool.push(cut)?,
                None => {
                    if cut.gradient.len() != model.dim(cut.stage - 1) {
                        return Err(CutError::DimensionMismatch(format!(
                            "stage {} cut has {} coefficients, state has {}",
                            cut.stage,
                            cut.gradient.len(),
                            model.dim(cut.stage - 1)
                        ))
                        .into());
                    }
                    *slot = Some(CutPool::with_initial(cut));
                }
            }
        }
        let pools = pools
            .into_iter()
            .enumerate()
            .map(|(i, p)| p.ok_or_else(|| SddpError::InvalidOptions(format!("no cuts for stage {}", i + 2))))
            .collect::<Result<_, _>>()?;
        Ok(Policy { pools })
    }

    /// Approximation of `Q_t` for `t ∈ 2..=T`; `None` past the horizon.
    pub fn pool(&self, t: usize) -> Option<&CutPool> {
        if t >= 2 {
            self.pools.get(t - 2)
        } else {
            None
        }
    }

    pub fn pool_mut(&mut self, t: usize) -> Option<&mut CutPool> {
        if t >= 2 {
            self.pools.get_mut(t - 2)
        } else {
            None
        }
    }

    /// The stage-`t` LP for realization `j` at `x_{t−1}`, with the epigraph of
    /// the stage-`t+1` pool when there is one.
    pub fn stage_lp(
        &self,
        model: &MultistageModel,
        t: usize,
        j: usize,
        x_prev: &DVector<f64>,
    ) -> Result<LinearProgram, SddpError> {
        let base = model.stage(t).realizations[j].subproblem(x_prev);
        Ok(match self.pool(t + 1) {
            Some(pool) => extend_stage_lp(&base, pool)?,
            None => base,
        })
    }

    /// Cost of following the policy with exact solves along one scenario.
    pub fn simulate(&self, model: &MultistageModel, scenario: &[usize]) -> Result<f64, SddpError> {
        let mut x = model.initial_state.clone();
        let mut cost = 0.0;
        for t in 1..=model.horizon {
            let j = scenario[t - 1];
            let lp = self.stage_lp(model, t, j, &x)?;
            let out = lp::solve_exact(&lp)?;
            check_status(&out, t, j)?;
            let y = out.primal.expect("optimal outcomes carry a primal point");
            let n = model.dim(t);
            let xt = y.rows(0, n).into_owned();
            cost += model.stage(t).realizations[j].cost.dot(&xt);
            x = xt;
        }
        Ok(cost)
    }

    /// Policy costs over many scenarios, evaluated in parallel and returned in
    /// scenario order.
    pub fn evaluate(&self, model: &MultistageModel, scenarios: &[Vec<usize>]) -> Result<Vec<f64>, SddpError> {
        scenarios.par_iter().map(|s| self.simulate(model, s)).collect()
    }
}

fn check_status(out: &LpSolveOutcome, stage: usize, realization: usize) -> Result<(), SddpError> {
    match out.status {
        LpStatus::Infeasible => Err(SddpError::SubproblemInfeasible { stage, realization }),
        LpStatus::Unbounded => Err(SddpError::SubproblemUnbounded { stage, realization }),
        _ => Ok(()),
    }
}

/// Draw one realization index per stage.
pub fn sample_scenario(model: &MultistageModel, rng: &mut ChaCha8Rng) -> Vec<usize> {
    model.stages.iter().map(|fan| fan.sample(rng)).collect()
}

/// All scenarios of the tree with their probabilities, depth-first.
pub fn enumerate_scenarios(model: &MultistageModel) -> Vec<(Vec<usize>, f64)> {
    let mut out = vec![(Vec::new(), 1.0)];
    for fan in &model.stages {
        let mut next = Vec::with_capacity(out.len() * fan.len());
        for (path, p) in &out {
            for (j, r) in fan.realizations.iter().enumerate() {
                let mut q = path.clone();
                q.push(j);
                next.push((q, p * r.probability));
            }
        }
        out = next;
    }
    out
}

/// Constant lower bounds `θ⁰_t` on `Q_t`, `t = 2..=T`, valid on the set of
/// states reachable from `x₀`.
///
/// Each stage's reachable states are enclosed in a box by maximizing every
/// coordinate with the previous stage's box as the only coupling; the stage
/// cost is then minimized over the same relaxation and the minima are summed
/// from the tail.
pub fn initial_lower_bounds(model: &MultistageModel) -> Result<Vec<f64>, SddpError> {
    let horizon = model.horizon;
    let mut stage_min = vec![0.0; horizon + 1];
    let mut prev_hi: Vec<f64> = model.initial_state.iter().copied().collect();
    for t in 1..=horizon {
        let n = model.dim(t);
        let fan = model.stage(t);
        let mut hi = vec![0.0f64; n];
        let mut expected = 0.0;
        for (j, r) in fan.realizations.iter().enumerate() {
            let relax = |obj: DVector<f64>| -> Result<LpSolveOutcome, SddpError> {
                let lp = if t == 1 {
                    LinearProgram::equality_form(obj, r.a.clone(), &r.rhs - &r.b_mat * &model.initial_state)?
                } else {
                    box_relaxation(&obj, r, &prev_hi)?
                };
                Ok(lp::solve_exact(&lp)?)
            };
            let pad = |c: &DVector<f64>| {
                if t == 1 {
                    c.clone()
                } else {
                    c.clone().resize_vertically(n + r.b_mat.ncols(), 0.0)
                }
            };
            let out = relax(pad(&r.cost))?;
            match out.status {
                LpStatus::Optimal => expected += r.probability * out.primal_objective.unwrap_or(0.0),
                LpStatus::Infeasible => return Err(SddpError::SubproblemInfeasible { stage: t, realization: j }),
                _ => return Err(SddpError::NoLowerBound { stage: t }),
            }
            for (i, h) in hi.iter_mut().enumerate() {
                let mut e = DVector::zeros(n);
                e[i] = -1.0;
                let out = relax(pad(&e))?;
                *h = match out.status {
                    LpStatus::Optimal => h.max(-out.primal_objective.unwrap_or(0.0)),
                    _ => f64::INFINITY,
                };
            }
        }
        stage_min[t] = expected;
        prev_hi = hi;
    }
    let mut bounds = vec![0.0; horizon - 1];
    let mut acc = 0.0;
    for t in (2..=horizon).rev() {
        acc += stage_min[t];
        bounds[t - 2] = acc;
    }
    Ok(bounds)
}

/// `{(x, z) ≥ 0 : A x + B z = b, z ≤ hi}` with objective `obj`.
fn box_relaxation(
    obj: &DVector<f64>,
    r: &crate::model::StageRealization,
    hi: &[f64],
) -> Result<LinearProgram, SddpError> {
    let n = r.a.ncols();
    let np = r.b_mat.ncols();
    let q = r.a.nrows();
    let mut a = nalgebra::DMatrix::zeros(q, n + np);
    a.view_mut((0, 0), (q, n)).copy_from(&r.a);
    a.view_mut((0, n), (q, np)).copy_from(&r.b_mat);
    let finite: Vec<usize> = (0..np).filter(|&i| hi[i].is_finite()).collect();
    let mut c = nalgebra::DMatrix::zeros(finite.len(), n + np);
    let mut f = DVector::zeros(finite.len());
    for (row, &i) in finite.iter().enumerate() {
        c[(row, n + i)] = 1.0;
        f[row] = hi[i];
    }
    Ok(LinearProgram::new(obj.clone(), a, r.rhs.clone(), c, f, vec![true; n + np])?)
}

/// States and errors of one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialTrajectory {
    /// `states[t − 1] = x_t`.
    pub states: Vec<DVector<f64>>,
    pub realizations: Vec<usize>,
    /// Measured `δ_t^k` when a bound on the optimum was available.
    pub achieved_delta: Vec<Option<f64>>,
    /// Approximate stage-1 optimum `𝔔̲₁`, a lower bound when stage 1 is exact.
    pub first_stage_value: f64,
    /// `Σ_t cᵀx_t` along the trajectory.
    pub cost: f64,
    pub pivots: usize,
    /// Largest Phase-2 pivot count of a single stage solve.
    pub max_phase2: usize,
}

struct Solved {
    outcome: LpSolveOutcome,
    /// Exact optimum when it was computed as a reference.
    reference: Option<f64>,
}

fn primal_solve(lp: &LinearProgram, acc: StageAccuracy) -> Result<Solved, SddpError> {
    let (limit, reference) = match acc {
        StageAccuracy::Exact => (PivotLimit::unlimited(), None),
        StageAccuracy::Cap(c) => (PivotLimit::cap(c), None),
        StageAccuracy::Absolute { delta, .. } => {
            let v = exact_value(lp)?;
            (PivotLimit::target(v + delta), Some(v))
        }
        StageAccuracy::Relative(rel) => {
            let v = exact_value(lp)?;
            (PivotLimit::target(v + rel * v.abs().max(1.0)), Some(v))
        }
    };
    Ok(Solved { outcome: lp::solve_primal(lp, limit)?, reference })
}

fn dual_solve(lp: &LinearProgram, acc: StageAccuracy) -> Result<Solved, SddpError> {
    let (limit, reference) = match acc {
        StageAccuracy::Exact => (PivotLimit::unlimited(), None),
        StageAccuracy::Cap(c) => (PivotLimit::cap(c), None),
        StageAccuracy::Absolute { eps, .. } => {
            let v = exact_value(lp)?;
            (PivotLimit::target(v - eps), Some(v))
        }
        StageAccuracy::Relative(rel) => {
            let v = exact_value(lp)?;
            (PivotLimit::target(v - rel * v.abs().max(1.0)), Some(v))
        }
    };
    Ok(Solved { outcome: lp::solve_dual(lp, limit)?, reference })
}

/// Optimum used as the yardstick for error-target schedules. Infeasible or
/// unbounded problems yield a yardstick that lets the real solve report it.
fn exact_value(lp: &LinearProgram) -> Result<f64, SddpError> {
    let out = lp::solve_exact(lp)?;
    Ok(match out.status {
        LpStatus::Optimal => out.primal_objective.unwrap_or(0.0),
        LpStatus::Infeasible => f64::INFINITY,
        _ => f64::NEG_INFINITY,
    })
}

/// Sampled forward pass under the current policy.
pub fn forward_pass(
    model: &MultistageModel,
    policy: &Policy,
    schedule: &ErrorSchedule,
    k: usize,
    rng: &mut ChaCha8Rng,
) -> Result<TrialTrajectory, SddpError> {
    let scenario = sample_scenario(model, rng);
    forward_along(model, policy, schedule, k, &scenario)
}

/// Forward pass along a given scenario.
pub fn forward_along(
    model: &MultistageModel,
    policy: &Policy,
    schedule: &ErrorSchedule,
    k: usize,
    scenario: &[usize],
) -> Result<TrialTrajectory, SddpError> {
    let horizon = model.horizon;
    let mut x = model.initial_state.clone();
    let mut states = Vec::with_capacity(horizon);
    let mut achieved_delta = Vec::with_capacity(horizon);
    let mut cost = 0.0;
    let mut pivots = 0;
    let mut max_phase2 = 0;
    let mut first_stage_value = f64::NAN;
    for t in 1..=horizon {
        let j = scenario[t - 1];
        let lp = policy.stage_lp(model, t, j, &x)?;
        let solved = primal_solve(&lp, schedule.accuracy(t, k, horizon))?;
        let out = &solved.outcome;
        check_status(out, t, j)?;
        pivots += out.total_pivots();
        max_phase2 = max_phase2.max(out.pivots_used);
        let value = out.primal_objective.unwrap_or(f64::NAN);
        if t == 1 {
            first_stage_value = value;
        }
        achieved_delta.push(match (solved.reference, out.gap()) {
            (Some(v), _) => Some((value - v).max(0.0)),
            (None, g) => g,
        });
        let y = out.primal.as_ref().expect("feasible outcomes carry a primal point");
        let xt = y.rows(0, model.dim(t)).into_owned();
        cost += model.stage(t).realizations[j].cost.dot(&xt);
        states.push(xt.clone());
        x = xt;
    }
    Ok(TrialTrajectory {
        states,
        realizations: scenario.to_vec(),
        achieved_delta,
        first_stage_value,
        cost,
        pivots,
        max_phase2,
    })
}

/// Cuts appended during one backward sweep, last stage first.
#[derive(Debug, Clone, PartialEq)]
pub struct BackwardResult {
    pub cuts: Vec<Cut>,
    pub pivots: usize,
    pub max_phase2: usize,
}

/// Backward sweep `t = T..2`; each new cut is appended before stage `t − 1`
/// is processed, so earlier stages already see it.
pub fn backward_pass(
    model: &MultistageModel,
    policy: &mut Policy,
    trajectory: &TrialTrajectory,
    schedule: &ErrorSchedule,
    k: usize,
) -> Result<BackwardResult, SddpError> {
    let horizon = model.horizon;
    let mut cuts = Vec::with_capacity(horizon - 1);
    let mut pivots = 0;
    let mut max_phase2 = 0;
    for t in (2..=horizon).rev() {
        let x_prev = &trajectory.states[t - 2];
        let acc = schedule.accuracy(t, k, horizon);
        let fan = model.stage(t);
        let pol: &Policy = policy;
        let solved: Vec<(LinearProgram, Solved)> = (0..fan.len())
            .into_par_iter()
            .map(|j| {
                let lp = pol.stage_lp(model, t, j, x_prev)?;
                let s = dual_solve(&lp, acc)?;
                check_status(&s.outcome, t, j)?;
                Ok((lp, s))
            })
            .collect::<Result<_, SddpError>>()?;
        let mut eps_total = Some(0.0);
        let mut duals = Vec::with_capacity(fan.len());
        for (j, (lp, s)) in solved.iter().enumerate() {
            pivots += s.outcome.total_pivots();
            max_phase2 = max_phase2.max(s.outcome.pivots_used);
            let d = s.outcome.dual.as_ref().expect("dual simplex outcomes carry a dual");
            let measured = match (s.reference, s.outcome.gap()) {
                (Some(v), _) => Some((v - d.objective).max(0.0)),
                (None, g) => g,
            };
            eps_total = match (eps_total, measured) {
                (Some(a), Some(e)) => Some(a + fan.realizations[j].probability * e),
                _ => None,
            };
            duals.push(StageDual {
                lambda: &d.eq,
                realization: &fan.realizations[j],
                extra_intercept: d.ineq.dot(&lp.ineq_rhs),
            });
        }
        let cut = build_cut_from_duals(&duals, t, k, eps_total)?;
        policy.pool_mut(t).expect("stages 2..=T have pools").push(cut.clone())?;
        cuts.push(cut);
    }
    Ok(BackwardResult { cuts, pivots, max_phase2 })
}

/// Exact stage-1 optimum over the current pools.
pub fn lower_bound(model: &MultistageModel, policy: &Policy) -> Result<f64, SddpError> {
    let lp = policy.stage_lp(model, 1, 0, &model.initial_state)?;
    let out = lp::solve_exact(&lp)?;
    check_status(&out, 1, 0)?;
    Ok(out.primal_objective.unwrap_or(f64::NAN))
}

/// Standard normal quantile.
pub fn normal_quantile(p: f64) -> f64 {
    Normal::new(0.0, 1.0).expect("unit normal").inverse_cdf(p)
}

/// Sample mean and one-sided upper confidence end of a cost sample.
pub fn confidence_upper(costs: &[f64], confidence: f64) -> (f64, f64) {
    let n = costs.len() as f64;
    if costs.windows(2).all(|w| w[0] == w[1]) {
        let c = costs.first().copied().unwrap_or(f64::NAN);
        return (c, c);
    }
    let mean = costs.iter().sum::<f64>() / n;
    let var = costs.iter().map(|c| (c - mean) * (c - mean)).sum::<f64>() / (n - 1.0);
    let stderr = (var / n).sqrt();
    (mean, mean + normal_quantile(confidence) * stderr)
}

/// Statistical upper bound from `n_realizations` fresh scenarios.
pub fn upper_bound(
    model: &MultistageModel,
    policy: &Policy,
    n_realizations: usize,
    confidence: f64,
    rng: &mut ChaCha8Rng,
) -> Result<(f64, f64), SddpError> {
    if n_realizations < 2 {
        return Err(SddpError::InvalidOptions("upper bound needs at least 2 scenarios".into()));
    }
    let scenarios: Vec<Vec<usize>> = (0..n_realizations).map(|_| sample_scenario(model, rng)).collect();
    let costs = policy.evaluate(model, &scenarios)?;
    Ok(confidence_upper(&costs, confidence))
}

/// Expected policy cost over every scenario of the tree.
pub fn expected_policy_cost(model: &MultistageModel, policy: &Policy) -> Result<f64, SddpError> {
    let all = enumerate_scenarios(model);
    let paths: Vec<Vec<usize>> = all.iter().map(|(s, _)| s.clone()).collect();
    let costs = policy.evaluate(model, &paths)?;
    Ok(costs.iter().zip(all.iter()).map(|(c, (_, p))| c * p).sum())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum UpperBoundMode {
    None,
    /// Fresh scenarios every `ub_every` iterations.
    Fresh { samples: usize },
    /// Costs of the most recent forward passes.
    Window { samples: usize },
    /// Exact expected cost over the whole tree.
    Enumerate,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StoppingRule {
    pub gap_tol: f64,
    pub max_iters: usize,
    pub ub_every: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOptions {
    pub stopping: StoppingRule,
    pub upper_bound: UpperBoundMode,
    pub confidence: f64,
    pub threads: Option<usize>,
    /// Overrides the computed initial cuts `θ⁰_t`, `t = 2..=T`.
    pub initial_bounds: Option<Vec<f64>>,
    /// Record wall time per iteration; off gives reproducible reports.
    pub record_time: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            stopping: StoppingRule { gap_tol: 0.1, max_iters: 100, ub_every: 1 },
            upper_bound: UpperBoundMode::Window { samples: 100 },
            confidence: 0.975,
            threads: None,
            initial_bounds: None,
            record_time: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    pub lower_bound: f64,
    pub ub_mean: Option<f64>,
    pub ub_upper: Option<f64>,
    pub gap: Option<f64>,
    pub pivots_forward: usize,
    pub pivots_backward: usize,
    /// Largest Phase-2 pivot count of any single solve this iteration.
    pub max_phase2: usize,
    pub millis: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub records: Vec<IterationRecord>,
    pub policy: Policy,
    pub trajectories: Vec<TrialTrajectory>,
    pub converged: bool,
}

impl RunReport {
    pub fn total_pivots(&self) -> usize {
        self.records.iter().map(|r| r.pivots_forward + r.pivots_backward).sum()
    }

    pub fn max_phase2_pivots(&self) -> usize {
        self.records.iter().map(|r| r.max_phase2).max().unwrap_or(0)
    }

    pub fn final_lower_bound(&self) -> Option<f64> {
        self.records.last().map(|r| r.lower_bound)
    }

    /// Every cut generated during the run, stage by stage.
    pub fn cuts(&self) -> impl Iterator<Item = &Cut> {
        self.policy.pools.iter().flat_map(|p| p.cuts().iter().skip(1))
    }
}

/// `(UB − LB)/|UB|`.
pub fn relative_gap(lb: f64, ub: f64) -> f64 {
    if ub == 0.0 {
        if ub == lb {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        (ub - lb) / ub.abs()
    }
}

/// Run forward and backward passes until the gap closes or the iteration
/// budget is spent. The result depends only on the inputs and `rng_seed`.
pub fn run(
    model: &MultistageModel,
    schedule: &ErrorSchedule,
    options: &RunOptions,
    rng_seed: u64,
) -> Result<RunReport, SddpError> {
    schedule.validate()?;
    match options.threads {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| SddpError::InvalidOptions(e.to_string()))?;
            pool.install(|| run_inner(model, schedule, options, rng_seed))
        }
        None => run_inner(model, schedule, options, rng_seed),
    }
}

fn run_inner(
    model: &MultistageModel,
    schedule: &ErrorSchedule,
    options: &RunOptions,
    rng_seed: u64,
) -> Result<RunReport, SddpError> {
    let bounds = match &options.initial_bounds {
        Some(b) => b.clone(),
        None => initial_lower_bounds(model)?,
    };
    let mut policy = Policy::initial(model, &bounds)?;
    let mut fwd_rng = ChaCha8Rng::seed_from_u64(rng_seed);
    fwd_rng.set_stream(STREAM_FORWARD);
    let mut ub_rng = ChaCha8Rng::seed_from_u64(rng_seed);
    ub_rng.set_stream(STREAM_UPPER);
    let stop = options.stopping;
    let mut records = Vec::new();
    let mut trajectories = Vec::new();
    let mut converged = false;
    for k in 1..=stop.max_iters {
        let clock = Instant::now();
        let traj = forward_pass(model, &policy, schedule, k, &mut fwd_rng)?;
        let back = backward_pass(model, &mut policy, &traj, schedule, k)?;
        let lb = lower_bound(model, &policy)?;
        let pivots_forward = traj.pivots;
        let max_phase2 = traj.max_phase2.max(back.max_phase2);
        trajectories.push(traj);
        let due = stop.ub_every > 0 && k % stop.ub_every == 0;
        let ub = match options.upper_bound {
            UpperBoundMode::None => None,
            _ if !due => None,
            UpperBoundMode::Fresh { samples } => {
                Some(upper_bound(model, &policy, samples, options.confidence, &mut ub_rng)?)
            }
            UpperBoundMode::Window { samples } => {
                let from = trajectories.len().saturating_sub(samples.max(2));
                let costs: Vec<f64> = trajectories[from..].iter().map(|t| t.cost).collect();
                if costs.len() >= 2 {
                    Some(confidence_upper(&costs, options.confidence))
                } else {
                    None
                }
            }
            UpperBoundMode::Enumerate => {
                let v = expected_policy_cost(model, &policy)?;
                Some((v, v))
            }
        };
        let gap = ub.map(|(_, hi)| relative_gap(lb, hi));
        records.push(IterationRecord {
            iteration: k,
            lower_bound: lb,
            ub_mean: ub.map(|u| u.0),
            ub_upper: ub.map(|u| u.1),
            gap,
            pivots_forward,
            pivots_backward: back.pivots,
            max_phase2,
            millis: if options.record_time { clock.elapsed().as_millis() as u64 } else { 0 },
        });
        if gap.is_some_and(|g| g < stop.gap_tol) {
            converged = true;
            break;
        }
    }
    Ok(RunReport { records, policy, trajectories, converged })
}

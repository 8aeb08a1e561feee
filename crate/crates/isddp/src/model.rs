//! Stagewise-independent multistage stochastic linear programs.
//!
//! Stage `t` chooses `x_t ≥ 0` subject to `A x_t + B x_{t−1} = b`, paying
//! `cᵀx_t`, where `(A, B, b, c)` is drawn from a finite fan of realizations
//! that does not depend on earlier draws.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lp::{self, LinearProgram, LpError, LpStatus};

/// Default cap on the number of variables in an extensive form.
pub const DEFAULT_TREE_LIMIT: usize = 50_000;

const PROB_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid model: {0}")]
    Validation(String),
    #[error("extensive form needs {vars} variables, limit is {limit}")]
    TreeTooLarge { vars: usize, limit: usize },
    #[error(transparent)]
    Lp(#[from] LpError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct StageRealization {
    pub a: DMatrix<f64>,
    pub b_mat: DMatrix<f64>,
    pub rhs: DVector<f64>,
    pub cost: DVector<f64>,
    pub probability: f64,
}

impl StageRealization {
    /// `{x ≥ 0 : A x = b − B x_prev}` with cost `cᵀx`.
    pub fn subproblem(&self, x_prev: &DVector<f64>) -> LinearProgram {
        let rhs = &self.rhs - &self.b_mat * x_prev;
        LinearProgram::equality_form(self.cost.clone(), self.a.clone(), rhs)
            .expect("realization dimensions are validated at construction")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StageFan {
    /// 1-based stage number.
    pub stage_index: usize,
    pub realizations: Vec<StageRealization>,
}

impl StageFan {
    pub fn len(&self) -> usize {
        self.realizations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.realizations.is_empty()
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.realizations.iter().map(|r| r.probability).collect()
    }

    /// Draw a realization index with one uniform variate.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (j, r) in self.realizations.iter().enumerate() {
            acc += r.probability;
            if u < acc {
                return j;
            }
        }
        self.realizations.len() - 1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultistageModel {
    pub horizon: usize,
    /// `stages[t − 1]` is the fan of stage `t`.
    pub stages: Vec<StageFan>,
    pub initial_state: DVector<f64>,
    /// `state_dims[t − 1]` is the length of `x_t`.
    pub state_dims: Vec<usize>,
}

impl MultistageModel {
    pub fn new(stages: Vec<StageFan>, initial_state: DVector<f64>) -> Result<Self, ModelError> {
        let state_dims = stages
            .iter()
            .map(|f| f.realizations.first().map_or(0, |r| r.a.ncols()))
            .collect();
        let model = MultistageModel { horizon: stages.len(), stages, initial_state, state_dims };
        model.validate()?;
        Ok(model)
    }

    /// Fan of 1-based stage `t`.
    pub fn stage(&self, t: usize) -> &StageFan {
        &self.stages[t - 1]
    }

    /// Length of `x_{t}` for `t ∈ 0..=T`.
    pub fn dim(&self, t: usize) -> usize {
        if t == 0 {
            self.initial_state.len()
        } else {
            self.state_dims[t - 1]
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.horizon < 2 {
            return Err(ModelError::Validation(format!("horizon must be at least 2, got {}", self.horizon)));
        }
        if self.stages.len() != self.horizon || self.state_dims.len() != self.horizon {
            return Err(ModelError::DimensionMismatch(format!(
                "horizon {} but {} stages and {} state dimensions",
                self.horizon,
                self.stages.len(),
                self.state_dims.len()
            )));
        }
        for (i, fan) in self.stages.iter().enumerate() {
            let t = i + 1;
            if fan.stage_index != t {
                return Err(ModelError::Validation(format!("stage {t} is labelled {}", fan.stage_index)));
            }
            if fan.is_empty() {
                return Err(ModelError::Validation(format!("stage {t} has no realizations")));
            }
            if t == 1 && fan.len() != 1 {
                return Err(ModelError::Validation(format!(
                    "stage 1 must be deterministic, found {} realizations",
                    fan.len()
                )));
            }
            let n = self.dim(t);
            let n_prev = self.dim(t - 1);
            let q = fan.realizations[0].a.nrows();
            for (j, r) in fan.realizations.iter().enumerate() {
                let shapes = [
                    ("A", r.a.shape(), (q, n)),
                    ("B", r.b_mat.shape(), (q, n_prev)),
                    ("b", (r.rhs.len(), 1), (q, 1)),
                    ("c", (r.cost.len(), 1), (n, 1)),
                ];
                for (name, got, want) in shapes {
                    if got != want {
                        return Err(ModelError::DimensionMismatch(format!(
                            "stage {t}, realization {}: {name} is {}x{}, expected {}x{}",
                            j + 1,
                            got.0,
                            got.1,
                            want.0,
                            want.1
                        )));
                    }
                }
                if !(r.probability > 0.0 && r.probability <= 1.0) {
                    return Err(ModelError::Validation(format!(
                        "stage {t}, realization {}: probability {} outside (0, 1]",
                        j + 1,
                        r.probability
                    )));
                }
            }
            let total: f64 = fan.realizations.iter().map(|r| r.probability).sum();
            if (total - 1.0).abs() > PROB_TOL {
                return Err(ModelError::Validation(format!("stage {t}: probabilities sum to {total}")));
            }
        }
        Ok(())
    }

    /// Number of nodes of the scenario tree below the root, stage by stage.
    pub fn tree_size(&self, from_stage: usize) -> (usize, usize) {
        let mut nodes = 0usize;
        let mut vars = 0usize;
        let mut layer = 1usize;
        for t in from_stage..=self.horizon {
            layer = layer.saturating_mul(self.stage(t).len());
            nodes = nodes.saturating_add(layer);
            vars = vars.saturating_add(layer.saturating_mul(self.dim(t)));
        }
        (nodes, vars)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelDoc {
    horizon: usize,
    state_dims: Vec<usize>,
    initial_state: Vec<f64>,
    stages: Vec<StageDoc>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StageDoc {
    realizations: Vec<RealizationDoc>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RealizationDoc {
    #[serde(rename = "A")]
    a: Vec<Vec<f64>>,
    #[serde(rename = "B")]
    b_mat: Vec<Vec<f64>>,
    b: Vec<f64>,
    c: Vec<f64>,
    p: f64,
}

fn matrix_from_rows(rows: &[Vec<f64>], ncols: usize, what: &str) -> Result<DMatrix<f64>, ModelError> {
    for (i, row) in rows.iter().enumerate() {
        if row.len() != ncols {
            return Err(ModelError::DimensionMismatch(format!(
                "{what}: row {} has {} entries, expected {ncols}",
                i + 1,
                row.len()
            )));
        }
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

/// Parse and validate a model document.
pub fn load_model(document: &str) -> Result<MultistageModel, ModelError> {
    let doc: ModelDoc = serde_json::from_str(document).map_err(|e| ModelError::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    if doc.stages.len() != doc.horizon || doc.state_dims.len() != doc.horizon {
        return Err(ModelError::DimensionMismatch(format!(
            "horizon {} but {} stages and {} state dimensions",
            doc.horizon,
            doc.stages.len(),
            doc.state_dims.len()
        )));
    }
    let mut stages = Vec::with_capacity(doc.horizon);
    for (i, sd) in doc.stages.iter().enumerate() {
        let t = i + 1;
        let n = doc.state_dims[i];
        let n_prev = if i == 0 { doc.initial_state.len() } else { doc.state_dims[i - 1] };
        let mut realizations = Vec::with_capacity(sd.realizations.len());
        for (j, rd) in sd.realizations.iter().enumerate() {
            let tag = |m: &str| format!("stage {t}, realization {}, {m}", j + 1);
            realizations.push(StageRealization {
                a: matrix_from_rows(&rd.a, n, &tag("A"))?,
                b_mat: matrix_from_rows(&rd.b_mat, n_prev, &tag("B"))?,
                rhs: DVector::from_vec(rd.b.clone()),
                cost: DVector::from_vec(rd.c.clone()),
                probability: rd.p,
            });
        }
        stages.push(StageFan { stage_index: t, realizations });
    }
    let model = MultistageModel {
        horizon: doc.horizon,
        stages,
        initial_state: DVector::from_vec(doc.initial_state),
        state_dims: doc.state_dims,
    };
    model.validate()?;
    Ok(model)
}

/// Serialize a model; floats are written in shortest round-trip form.
pub fn save_model(model: &MultistageModel) -> String {
    let doc = ModelDoc {
        horizon: model.horizon,
        state_dims: model.state_dims.clone(),
        initial_state: model.initial_state.iter().copied().collect(),
        stages: model
            .stages
            .iter()
            .map(|f| StageDoc {
                realizations: f
                    .realizations
                    .iter()
                    .map(|r| RealizationDoc {
                        a: matrix_to_rows(&r.a),
                        b_mat: matrix_to_rows(&r.b_mat),
                        b: r.rhs.iter().copied().collect(),
                        c: r.cost.iter().copied().collect(),
                        p: r.probability,
                    })
                    .collect(),
            })
            .collect(),
    };
    serde_json::to_string_pretty(&doc).expect("model documents always serialize")
}

/// Deterministic equivalent of the tail problem from stage `from_stage`, with
/// `x_{from_stage − 1}` fixed. Nodes are numbered depth-first.
#[derive(Debug, Clone)]
pub struct ExtensiveForm {
    pub lp: LinearProgram,
    pub nodes: Vec<TreeNode>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TreeNode {
    pub stage: usize,
    pub realization: usize,
    pub parent: Option<usize>,
    pub probability: f64,
    /// First variable of this node's `x_t` in the extensive form.
    pub offset: usize,
}

impl ExtensiveForm {
    /// Decision vector of a node within an extensive-form solution.
    pub fn node_state(&self, node: usize, y: &DVector<f64>, dim: usize) -> DVector<f64> {
        y.rows(self.nodes[node].offset, dim).into_owned()
    }
}

/// Deterministic equivalent over the full tree; its optimum is `Q₁(x₀)`.
pub fn build_extensive_form(model: &MultistageModel, limit: usize) -> Result<ExtensiveForm, ModelError> {
    build_tail_extensive_form(model, 1, &model.initial_state, limit)
}

pub fn build_tail_extensive_form(
    model: &MultistageModel,
    from_stage: usize,
    x_prev: &DVector<f64>,
    limit: usize,
) -> Result<ExtensiveForm, ModelError> {
    if x_prev.len() != model.dim(from_stage - 1) {
        return Err(ModelError::DimensionMismatch(format!(
            "state has length {}, stage {} expects {}",
            x_prev.len(),
            from_stage,
            model.dim(from_stage - 1)
        )));
    }
    let (_, vars) = model.tree_size(from_stage);
    if vars > limit {
        return Err(ModelError::TreeTooLarge { vars, limit });
    }
    let mut nodes = Vec::new();
    let mut rows = 0usize;
    let mut offset = 0usize;
    // Depth-first enumeration with an explicit stack; children pushed in
    // reverse so realization 0 is visited first.
    let mut stack: Vec<(usize, usize, Option<usize>, f64)> = Vec::new();
    let fan = model.stage(from_stage);
    for j in (0..fan.len()).rev() {
        stack.push((from_stage, j, None, fan.realizations[j].probability));
    }
    while let Some((t, j, parent, prob)) = stack.pop() {
        let id = nodes.len();
        nodes.push(TreeNode { stage: t, realization: j, parent, probability: prob, offset });
        offset += model.dim(t);
        rows += model.stage(t).realizations[j].a.nrows();
        if t < model.horizon {
            let next = model.stage(t + 1);
            for k in (0..next.len()).rev() {
                stack.push((t + 1, k, Some(id), prob * next.realizations[k].probability));
            }
        }
    }
    let mut a = DMatrix::zeros(rows, offset);
    let mut b = DVector::zeros(rows);
    let mut c = DVector::zeros(offset);
    let mut row = 0usize;
    for node in &nodes {
        let r = &model.stage(node.stage).realizations[node.realization];
        let n = r.a.ncols();
        let q = r.a.nrows();
        a.view_mut((row, node.offset), (q, n)).copy_from(&r.a);
        let mut rhs = r.rhs.clone();
        match node.parent {
            Some(p) => {
                let po = nodes[p].offset;
                a.view_mut((row, po), (q, r.b_mat.ncols())).copy_from(&r.b_mat);
            }
            None => rhs -= &r.b_mat * x_prev,
        }
        b.rows_mut(row, q).copy_from(&rhs);
        c.rows_mut(node.offset, n).axpy(node.probability, &r.cost, 1.0);
        row += q;
    }
    Ok(ExtensiveForm { lp: LinearProgram::equality_form(c, a, b)?, nodes })
}

/// Exact `Q_t(x_{t−1})` by solving the tail extensive form.
pub fn tail_value(model: &MultistageModel, t: usize, x_prev: &DVector<f64>, limit: usize) -> Result<f64, ModelError> {
    let ef = build_tail_extensive_form(model, t, x_prev, limit)?;
    let out = lp::solve_exact(&ef.lp)?;
    match out.status {
        LpStatus::Optimal => Ok(out.primal_objective.unwrap_or(f64::NAN)),
        LpStatus::Infeasible => Ok(f64::INFINITY),
        LpStatus::Unbounded => Ok(f64::NEG_INFINITY),
        LpStatus::IterationCapped => unreachable!("exact solves are uncapped"),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RecourseFailure {
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecourseViolation {
    pub sample: usize,
    pub stage: usize,
    pub realization: usize,
    pub failure: RecourseFailure,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct RecourseReport {
    pub samples: usize,
    pub violations: Vec<RecourseViolation>,
}

/// Monte-Carlo check that sampled trajectories, driven by the myopic policy
/// `min cᵀx_t`, meet feasible and bounded subproblems at every stage.
pub fn check_recourse(model: &MultistageModel, samples: usize, rng_seed: u64) -> Result<RecourseReport, ModelError> {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut report = RecourseReport { samples, violations: Vec::new() };
    for s in 0..samples {
        let mut x = model.initial_state.clone();
        for t in 1..=model.horizon {
            let fan = model.stage(t);
            let j = fan.sample(&mut rng);
            let out = lp::solve_exact(&fan.realizations[j].subproblem(&x))?;
            let failure = match out.status {
                LpStatus::Optimal => None,
                LpStatus::Infeasible => Some(RecourseFailure::Infeasible),
                _ => Some(RecourseFailure::Unbounded),
            };
            if let Some(failure) = failure {
                report.violations.push(RecourseViolation { sample: s, stage: t, realization: j, failure });
                break;
            }
            x = out.primal.expect("optimal outcomes carry a primal point");
        }
    }
    Ok(report)
}

/// Random states reachable from `x₀`: `states[t − 1]` holds `count` points
/// `x_t`, one per sampled trajectory.
///
/// At every stage a realization is drawn and the next state mixes two
/// feasible points: the minimizer of a random positive cost, and the
/// minimizer of a random signed cost over a box twice as large as the first
/// point. Both are feasible for the drawn subproblem, so the mixture is too.
pub fn sample_reachable_states(
    model: &MultistageModel,
    count: usize,
    rng_seed: u64,
) -> Result<Vec<Vec<DVector<f64>>>, ModelError> {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut states = vec![Vec::with_capacity(count); model.horizon];
    for _ in 0..count {
        let mut x = model.initial_state.clone();
        for t in 1..=model.horizon {
            let fan = model.stage(t);
            let sub = fan.realizations[fan.sample(&mut rng)].subproblem(&x);
            let n = sub.num_vars();
            let positive = DVector::from_fn(n, |_, _| rng.random_range(0.05..1.0));
            let first = solve_point(&LinearProgram { objective: positive, ..sub.clone() }, t)?;
            let cap = 2.0 * first.amax().max(1.0);
            let signed = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
            let boxed = LinearProgram::new(
                signed,
                sub.eq_matrix.clone(),
                sub.eq_rhs.clone(),
                DMatrix::identity(n, n),
                DVector::from_element(n, cap),
                vec![true; n],
            )?;
            let second = solve_point(&boxed, t)?;
            let w: f64 = rng.random_range(0.0..1.0);
            x = first * w + second * (1.0 - w);
            states[t - 1].push(x.clone());
        }
    }
    Ok(states)
}

fn solve_point(lp: &LinearProgram, stage: usize) -> Result<DVector<f64>, ModelError> {
    let out = lp::solve_exact(lp)?;
    match out.status {
        LpStatus::Optimal => Ok(out.primal.expect("optimal outcomes carry a primal point")),
        _ => Err(ModelError::Validation(format!("stage {stage} has no feasible point from a sampled state"))),
    }
}

/// A small single-item inventory model used by tests and examples.
///
/// State `x_t = (h_t, y_t)`: stock carried after stage `t` and quantity
/// ordered. Each stage enforces `h_t = h_{t−1} + y_t − d` for a random demand
/// `d` and charges holding and ordering costs that vary by realization.
pub fn inventory_instance(horizon: usize, fan_size: usize, seed: u64) -> MultistageModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut stages = Vec::with_capacity(horizon);
    for t in 1..=horizon {
        let m = if t == 1 { 1 } else { fan_size };
        let realizations = (0..m)
            .map(|_| {
                let demand = rng.random_range(0.5..2.0);
                let hold = rng.random_range(0.1..0.5);
                let order = rng.random_range(0.5..2.0);
                StageRealization {
                    a: DMatrix::from_row_slice(1, 2, &[1.0, -1.0]),
                    b_mat: DMatrix::from_row_slice(1, 2, &[-1.0, 0.0]),
                    rhs: DVector::from_element(1, -demand),
                    cost: DVector::from_column_slice(&[hold, order]),
                    probability: 1.0 / m as f64,
                }
            })
            .collect();
        stages.push(StageFan { stage_index: t, realizations });
    }
    MultistageModel::new(stages, DVector::from_column_slice(&[1.0, 0.0])).expect("generator is well formed")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_stage_doc(p: &str) -> String {
        format!(
            r#"{{"horizon": 2, "state_dims": [1, 1], "initial_state": [0.0],
              "stages": [
                {{"realizations": [{{"A": [[1.0]], "B": [[0.0]], "b": [1.0], "c": [1.0], "p": 1.0}}]}},
                {{"realizations": [{p}]}}
              ]}}"#
        )
    }

    #[test]
    fn smallest_legal_model_loads() {
        let m = load_model(&two_stage_doc(r#"{"A": [[1.0]], "B": [[-1.0]], "b": [0.0], "c": [2.0], "p": 1.0}"#))
            .unwrap();
        assert_eq!(m.horizon, 2);
        assert_eq!(m.stage(2).len(), 1);
    }

    #[test]
    fn probabilities_must_sum_to_one() {
        let r = r#"{"A": [[1.0]], "B": [[-1.0]], "b": [0.0], "c": [2.0], "p": 0.5},
                   {"A": [[1.0]], "B": [[-1.0]], "b": [0.0], "c": [2.0], "p": 0.6}"#;
        let err = load_model(&two_stage_doc(r)).unwrap_err();
        assert!(err.to_string().contains("probabilities sum to 1.1"), "{err}");
    }

    #[test]
    fn bad_shapes_and_syntax_are_located() {
        let r = r#"{"A": [[1.0, 2.0]], "B": [[-1.0]], "b": [0.0], "c": [2.0], "p": 1.0}"#;
        assert!(matches!(load_model(&two_stage_doc(r)), Err(ModelError::DimensionMismatch(_))));
        match load_model("{\"horizon\": 2,\n \"stages\": [}") {
            Err(ModelError::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        let extra = two_stage_doc(r#"{"A": [[1.0]], "B": [[-1.0]], "b": [0.0], "c": [2.0], "p": 1.0, "transition": [[1.0]]}"#);
        assert!(matches!(load_model(&extra), Err(ModelError::Parse { .. })));
    }

    #[test]
    fn single_scenario_extensive_form_stacks_stages() {
        let m = load_model(&two_stage_doc(r#"{"A": [[1.0]], "B": [[-1.0]], "b": [0.5], "c": [2.0], "p": 1.0}"#))
            .unwrap();
        let ef = build_extensive_form(&m, DEFAULT_TREE_LIMIT).unwrap();
        assert_eq!(ef.lp.eq_matrix, DMatrix::from_row_slice(2, 2, &[1.0, 0.0, -1.0, 1.0]));
        assert_eq!(ef.lp.eq_rhs.as_slice(), &[1.0, 0.5]);
        let out = lp::solve_exact(&ef.lp).unwrap();
        assert!((out.primal_objective.unwrap() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn tree_limit_is_enforced() {
        let m = inventory_instance(6, 10, 1);
        assert!(matches!(build_extensive_form(&m, 1000), Err(ModelError::TreeTooLarge { .. })));
    }
}

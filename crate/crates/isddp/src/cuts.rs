//! Affine minorants of cost-to-go functions and the pools that hold them.

use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::lp::LinearProgram;
use crate::model::StageRealization;

#[derive(Debug, Error)]
pub enum CutError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("cut file: {0}")]
    Format(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// `C(x) = θ + ⟨β, x⟩`, a lower bound on the stage-`t` cost-to-go.
#[derive(Debug, Clone, PartialEq)]
pub struct Cut {
    pub intercept: f64,
    pub gradient: DVector<f64>,
    pub stage: usize,
    pub iteration: usize,
    /// Distance to the cost-to-go at the trial point, when it was measured.
    pub achieved_eps: Option<f64>,
}

impl Cut {
    pub fn value(&self, x: &DVector<f64>) -> f64 {
        self.intercept + self.gradient.dot(x)
    }
}

/// Append-only pool for one stage; `cuts[0]` is the initial minorant.
#[derive(Debug, Clone, PartialEq)]
pub struct CutPool {
    pub stage: usize,
    pub dim: usize,
    cuts: Vec<Cut>,
}

impl CutPool {
    /// Pool seeded with the constant cut `θ⁰`.
    pub fn with_lower_bound(stage: usize, dim: usize, theta0: f64) -> Self {
        let initial = Cut { intercept: theta0, gradient: DVector::zeros(dim), stage, iteration: 0, achieved_eps: None };
        CutPool { stage, dim, cuts: vec![initial] }
    }

    pub fn with_initial(initial: Cut) -> Self {
        CutPool { stage: initial.stage, dim: initial.gradient.len(), cuts: vec![initial] }
    }

    pub fn push(&mut self, cut: Cut) -> Result<(), CutError> {
        if cut.gradient.len() != self.dim {
            return Err(CutError::DimensionMismatch(format!(
                "cut has {} coefficients, pool for stage {} expects {}",
                cut.gradient.len(),
                self.stage,
                self.dim
            )));
        }
        self.cuts.push(cut);
        Ok(())
    }

    pub fn cuts(&self) -> &[Cut] {
        &self.cuts
    }

    pub fn len(&self) -> usize {
        self.cuts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cuts.is_empty()
    }

    /// A pool holding only the first `n` cuts.
    pub fn truncated(&self, n: usize) -> CutPool {
        CutPool { stage: self.stage, dim: self.dim, cuts: self.cuts[..n.min(self.cuts.len())].to_vec() }
    }
}

/// Duals of one realization's stage subproblem.
#[derive(Debug, Clone, Copy)]
pub struct StageDual<'a> {
    pub lambda: &'a DVector<f64>,
    pub realization: &'a StageRealization,
    /// Contribution of rows whose right-hand side does not depend on the
    /// previous state, usually `⟨μ, θ_{t+1}⟩` from the epigraph rows.
    pub extra_intercept: f64,
}

/// `θ = Σ p_j(⟨λ_j, b_j⟩ + e_j)`, `β = −Σ p_j B_jᵀλ_j`.
pub fn build_cut_from_duals(
    stage_duals: &[StageDual<'_>],
    stage: usize,
    iteration: usize,
    achieved_eps: Option<f64>,
) -> Result<Cut, CutError> {
    let first = stage_duals
        .first()
        .ok_or_else(|| CutError::DimensionMismatch("no realizations supplied".into()))?;
    let dim = first.realization.b_mat.ncols();
    let mut intercept = 0.0;
    let mut gradient = DVector::zeros(dim);
    for (j, d) in stage_duals.iter().enumerate() {
        let r = d.realization;
        if d.lambda.len() != r.rhs.len() || r.b_mat.ncols() != dim {
            return Err(CutError::DimensionMismatch(format!(
                "realization {}: {} duals for {} rows, {} state columns (expected {dim})",
                j + 1,
                d.lambda.len(),
                r.rhs.len(),
                r.b_mat.ncols()
            )));
        }
        intercept += r.probability * (d.lambda.dot(&r.rhs) + d.extra_intercept);
        gradient -= r.b_mat.tr_mul(d.lambda) * r.probability;
    }
    Ok(Cut { intercept, gradient, stage, iteration, achieved_eps })
}

/// `max_i θ_i + ⟨β_i, x⟩`.
pub fn evaluate_pool(pool: &CutPool, x: &DVector<f64>) -> Result<f64, CutError> {
    if x.len() != pool.dim {
        return Err(CutError::DimensionMismatch(format!(
            "point has length {}, pool for stage {} expects {}",
            x.len(),
            pool.stage,
            pool.dim
        )));
    }
    Ok(pool.cuts.iter().map(|c| c.value(x)).fold(f64::NEG_INFINITY, f64::max))
}

/// Appends a free epigraph variable `f` (last column) and one row
/// `⟨β_i, x⟩ − f ≤ −θ_i` per cut, and adds `f` to the objective.
pub fn extend_stage_lp(base: &LinearProgram, pool: &CutPool) -> Result<LinearProgram, CutError> {
    let n = base.num_vars();
    if pool.dim != n {
        return Err(CutError::DimensionMismatch(format!(
            "stage LP has {n} variables, pool for stage {} has dimension {}",
            pool.stage, pool.dim
        )));
    }
    let mi = base.ineq_matrix.nrows();
    let k = pool.len();
    let objective = base.objective.clone().insert_row(n, 1.0);
    let eq_matrix = base.eq_matrix.clone().insert_column(n, 0.0);
    let mut ineq_matrix = DMatrix::zeros(mi + k, n + 1);
    ineq_matrix.view_mut((0, 0), (mi, n)).copy_from(&base.ineq_matrix);
    let mut ineq_rhs = DVector::zeros(mi + k);
    ineq_rhs.rows_mut(0, mi).copy_from(&base.ineq_rhs);
    for (i, cut) in pool.cuts.iter().enumerate() {
        for j in 0..n {
            ineq_matrix[(mi + i, j)] = cut.gradient[j];
        }
        ineq_matrix[(mi + i, n)] = -1.0;
        ineq_rhs[mi + i] = -cut.intercept;
    }
    let mut nonneg = base.nonneg.clone();
    nonneg.push(false);
    Ok(LinearProgram { objective, eq_matrix, eq_rhs: base.eq_rhs.clone(), ineq_matrix, ineq_rhs, nonneg })
}

/// Writes `stage,iteration,theta,beta_1..beta_n,achieved_eps`, padding short
/// gradients with empty cells. Unknown errors are written as empty cells.
pub fn write_cuts_csv<W: Write>(pools: &[CutPool], out: W) -> Result<(), CutError> {
    let width = pools.iter().map(|p| p.dim).max().unwrap_or(0);
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["stage".to_string(), "iteration".to_string(), "theta".to_string()];
    header.extend((1..=width).map(|i| format!("beta_{i}")));
    header.push("achieved_eps".into());
    w.write_record(&header)?;
    for pool in pools {
        for cut in pool.cuts() {
            let mut rec = vec![cut.stage.to_string(), cut.iteration.to_string(), format!("{:?}", cut.intercept)];
            for i in 0..width {
                rec.push(cut.gradient.get(i).map_or(String::new(), |v| format!("{v:?}")));
            }
            rec.push(cut.achieved_eps.map_or(String::new(), |e| format!("{e:?}")));
            w.write_record(&rec)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads a cut dump back; `dims(stage)` gives each stage's state dimension.
pub fn read_cuts_csv<R: Read>(input: R, dims: impl Fn(usize) -> Option<usize>) -> Result<Vec<Cut>, CutError> {
    let mut rdr = csv::Reader::from_reader(input);
    let width = rdr.headers()?.len().saturating_sub(4);
    let mut cuts = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let bad = |what: &str| CutError::Format(format!("record {}: bad {what}", line + 1));
        let field = |i: usize| rec.get(i).unwrap_or("").trim();
        let stage: usize = field(0).parse().map_err(|_| bad("stage"))?;
        let iteration: usize = field(1).parse().map_err(|_| bad("iteration"))?;
        let intercept: f64 = field(2).parse().map_err(|_| bad("theta"))?;
        let n = dims(stage).ok_or_else(|| bad("stage number"))?;
        if n > width {
            return Err(bad("gradient width"));
        }
        let mut gradient = DVector::zeros(n);
        for i in 0..n {
            gradient[i] = field(3 + i).parse().map_err(|_| bad("beta"))?;
        }
        let eps = field(3 + width);
        let achieved_eps = if eps.is_empty() { None } else { Some(eps.parse().map_err(|_| bad("achieved_eps"))?) };
        cuts.push(Cut { intercept, gradient, stage, iteration, achieved_eps });
    }
    Ok(cuts)
}

//! Dense revised simplex with iteration caps.
//!
//! Problems are stated as `min cᵀy  s.t.  Ay = b, Cy ≤ f` with a per-variable
//! nonnegativity flag. Internally every problem is brought to the standard
//! form `min cᵀz  s.t.  Gz = h, z ≥ 0, h ≥ 0` by splitting free variables,
//! adding slacks, flipping rows with a negative right-hand side and dropping
//! linearly dependent equality rows.
//!
//! Duals follow the convention `λ` free for equality rows and `μ ≤ 0` for
//! inequality rows, so that `c − Aᵀλ − Cᵀμ` is nonnegative on nonnegative
//! variables and zero on free ones.
//!
//! Pivoting uses Bland's rule with lowest-index tie breaking, which makes the
//! whole pivot path a deterministic function of the input. Caps truncate that
//! path after Phase 1, so a smaller cap always yields a prefix of the path of
//! a larger one.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

/// Primal feasibility tolerance.
pub const FEAS_TOL: f64 = 1e-8;
/// Relative optimality tolerance.
pub const OPT_TOL: f64 = 1e-9;

const PIVOT_TOL: f64 = 1e-9;
const RATIO_TIE: f64 = 1e-12;
const DUAL_PIVOT_REL: f64 = 1e-7;
const REFACTOR_EVERY: usize = 32;
const MAX_TOTAL_PIVOTS: usize = 1_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LpError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("numerical breakdown: {0}")]
    NumericalBreakdown(String),
}

/// `min cᵀy  s.t.  eq_matrix·y = eq_rhs, ineq_matrix·y ≤ ineq_rhs`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgram {
    pub objective: DVector<f64>,
    pub eq_matrix: DMatrix<f64>,
    pub eq_rhs: DVector<f64>,
    pub ineq_matrix: DMatrix<f64>,
    pub ineq_rhs: DVector<f64>,
    /// `true` marks `y_j ≥ 0`, `false` a free variable.
    pub nonneg: Vec<bool>,
}

impl LinearProgram {
    pub fn new(
        objective: DVector<f64>,
        eq_matrix: DMatrix<f64>,
        eq_rhs: DVector<f64>,
        ineq_matrix: DMatrix<f64>,
        ineq_rhs: DVector<f64>,
        nonneg: Vec<bool>,
    ) -> Result<Self, LpError> {
        let lp = LinearProgram { objective, eq_matrix, eq_rhs, ineq_matrix, ineq_rhs, nonneg };
        lp.validate()?;
        Ok(lp)
    }

    /// An LP with only equality rows and all variables nonnegative.
    pub fn equality_form(c: DVector<f64>, a: DMatrix<f64>, b: DVector<f64>) -> Result<Self, LpError> {
        let n = c.len();
        LinearProgram::new(c, a, b, DMatrix::zeros(0, n), DVector::zeros(0), vec![true; n])
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn validate(&self) -> Result<(), LpError> {
        let n = self.objective.len();
        if self.eq_matrix.ncols() != n || self.ineq_matrix.ncols() != n || self.nonneg.len() != n {
            return Err(LpError::DimensionMismatch(format!(
                "objective has {n} entries but matrices have {} and {} columns, mask has {}",
                self.eq_matrix.ncols(),
                self.ineq_matrix.ncols(),
                self.nonneg.len()
            )));
        }
        if self.eq_matrix.nrows() != self.eq_rhs.len() {
            return Err(LpError::DimensionMismatch(format!(
                "{} equality rows but {} right-hand sides",
                self.eq_matrix.nrows(),
                self.eq_rhs.len()
            )));
        }
        if self.ineq_matrix.nrows() != self.ineq_rhs.len() {
            return Err(LpError::DimensionMismatch(format!(
                "{} inequality rows but {} right-hand sides",
                self.ineq_matrix.nrows(),
                self.ineq_rhs.len()
            )));
        }
        Ok(())
    }

    /// Objective value of `y`.
    pub fn value(&self, y: &DVector<f64>) -> f64 {
        self.objective.dot(y)
    }

    /// Largest violation of the constraints by `y` (0 when feasible).
    pub fn primal_violation(&self, y: &DVector<f64>) -> f64 {
        let mut worst = 0.0f64;
        if self.eq_matrix.nrows() > 0 {
            let r = &self.eq_matrix * y - &self.eq_rhs;
            worst = worst.max(r.amax());
        }
        if self.ineq_matrix.nrows() > 0 {
            let r = &self.ineq_matrix * y - &self.ineq_rhs;
            worst = worst.max(r.max().max(0.0));
        }
        for (j, &nn) in self.nonneg.iter().enumerate() {
            if nn {
                worst = worst.max(-y[j]);
            }
        }
        worst
    }

    /// Largest violation of dual feasibility by `(λ, μ)`.
    pub fn dual_violation(&self, lambda: &DVector<f64>, mu: &DVector<f64>) -> f64 {
        let d = self.reduced_costs(lambda, mu);
        let mut worst = mu.iter().fold(0.0f64, |w, &m| w.max(m));
        for (j, &nn) in self.nonneg.iter().enumerate() {
            worst = worst.max(if nn { -d[j] } else { d[j].abs() });
        }
        worst
    }

    /// `c − Aᵀλ − Cᵀμ`.
    pub fn reduced_costs(&self, lambda: &DVector<f64>, mu: &DVector<f64>) -> DVector<f64> {
        &self.objective - self.eq_matrix.tr_mul(lambda) - self.ineq_matrix.tr_mul(mu)
    }

    /// `λᵀb + μᵀf`.
    pub fn dual_value(&self, lambda: &DVector<f64>, mu: &DVector<f64>) -> f64 {
        lambda.dot(&self.eq_rhs) + mu.dot(&self.ineq_rhs)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    IterationCapped,
    Infeasible,
    Unbounded,
}

/// Dual pair in the original row space.
#[derive(Debug, Clone, PartialEq)]
pub struct DualSolution {
    pub eq: DVector<f64>,
    pub ineq: DVector<f64>,
    pub objective: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolveOutcome {
    pub status: LpStatus,
    pub primal: Option<DVector<f64>>,
    pub primal_objective: Option<f64>,
    /// Present whenever the final basis is dual feasible.
    pub dual: Option<DualSolution>,
    /// Phase-2 pivots, the part subject to the cap.
    pub pivots_used: usize,
    pub phase1_pivots: usize,
    /// Final basis as standard-form column indices.
    pub basis: Vec<usize>,
}

impl LpSolveOutcome {
    pub fn total_pivots(&self) -> usize {
        self.pivots_used + self.phase1_pivots
    }

    pub fn dual_objective(&self) -> Option<f64> {
        self.dual.as_ref().map(|d| d.objective)
    }

    /// Primal minus dual objective when both sides are available.
    pub fn gap(&self) -> Option<f64> {
        match (self.primal_objective, self.dual_objective()) {
            (Some(p), Some(d)) => Some((p - d).max(0.0)),
            _ => None,
        }
    }

    fn empty(status: LpStatus) -> Self {
        LpSolveOutcome {
            status,
            primal: None,
            primal_objective: None,
            dual: None,
            pivots_used: 0,
            phase1_pivots: 0,
            basis: Vec::new(),
        }
    }
}

/// Where Phase 2 may stop early.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PivotLimit {
    pub max_pivots: Option<usize>,
    /// Primal: stop once the objective is at or below it. Dual: stop once the
    /// dual objective is at or above it.
    pub target: Option<f64>,
}

impl PivotLimit {
    pub fn unlimited() -> Self {
        PivotLimit::default()
    }

    pub fn cap(max_pivots: usize) -> Self {
        PivotLimit { max_pivots: Some(max_pivots), target: None }
    }

    pub fn target(target: f64) -> Self {
        PivotLimit { max_pivots: None, target: Some(target) }
    }
}

/// Solve to optimality with the primal simplex.
pub fn solve_exact(lp: &LinearProgram) -> Result<LpSolveOutcome, LpError> {
    solve_primal(lp, PivotLimit::unlimited())
}

/// Dual simplex whose Phase 2 stops after `max_pivots` pivots.
pub fn solve_dual_capped(lp: &LinearProgram, max_pivots: usize) -> Result<LpSolveOutcome, LpError> {
    solve_dual(lp, PivotLimit::cap(max_pivots))
}

/// Primal simplex whose Phase 2 stops after `max_pivots` pivots.
pub fn solve_primal_capped(lp: &LinearProgram, max_pivots: usize) -> Result<LpSolveOutcome, LpError> {
    solve_primal(lp, PivotLimit::cap(max_pivots))
}

/// Primal simplex: exact Phase 1, then Phase 2 truncated by `limit`.
/// The primal iterate is feasible whenever the status is not `Infeasible`.
pub fn solve_primal(lp: &LinearProgram, limit: PivotLimit) -> Result<LpSolveOutcome, LpError> {
    lp.validate()?;
    let sf = StandardForm::build(lp);
    if sf.inconsistent {
        return Ok(LpSolveOutcome::empty(LpStatus::Infeasible));
    }
    let (mut eng, feasible) = Engine::phase_one(&sf.g, &sf.h, &sf.c)?;
    let phase1 = eng.pivots;
    if !feasible {
        let mut out = LpSolveOutcome::empty(LpStatus::Infeasible);
        out.phase1_pivots = phase1;
        return Ok(out);
    }
    eng.pivots = 0;
    let end = eng.primal_iterate(limit.max_pivots, limit.target)?;
    let status = match end {
        IterEnd::Optimal => LpStatus::Optimal,
        IterEnd::Stopped => LpStatus::IterationCapped,
        IterEnd::Unbounded => LpStatus::Unbounded,
        IterEnd::Infeasible => LpStatus::Infeasible,
    };
    let z = eng.primal_values();
    let y = sf.recover_primal(&z);
    let primal_objective = lp.value(&y);
    let dual = if status == LpStatus::Optimal { Some(sf.recover_dual(lp, &eng.duals())) } else { None };
    Ok(LpSolveOutcome {
        status,
        primal: Some(y),
        primal_objective: Some(primal_objective),
        dual,
        pivots_used: eng.pivots,
        phase1_pivots: phase1,
        basis: eng.real_basis(),
    })
}

/// Dual simplex: Phase 1 finds a dual-feasible vertex, Phase 2 is truncated
/// by `limit`. The returned dual pair is dual feasible and basic for every
/// cap, so its objective is a lower bound on the optimum.
pub fn solve_dual(lp: &LinearProgram, limit: PivotLimit) -> Result<LpSolveOutcome, LpError> {
    lp.validate()?;
    let sf = StandardForm::build(lp);
    if sf.inconsistent {
        return Ok(LpSolveOutcome::empty(LpStatus::Infeasible));
    }
    let (mut eng, phase1) = match Engine::dual_phase_one(&sf.g, &sf.h, &sf.c)? {
        Some(found) => found,
        None => return Ok(LpSolveOutcome::empty(LpStatus::Unbounded)),
    };
    eng.pivots = 0;
    let end = eng.dual_iterate(limit.max_pivots, limit.target)?;
    let dual = sf.recover_dual(lp, &eng.duals());
    let z = eng.primal_values();
    let feasible = eng.primal_basic().iter().all(|&v| v >= -FEAS_TOL);
    let status = match end {
        IterEnd::Optimal => LpStatus::Optimal,
        IterEnd::Stopped if feasible => LpStatus::Optimal,
        IterEnd::Stopped => LpStatus::IterationCapped,
        IterEnd::Infeasible => LpStatus::Infeasible,
        IterEnd::Unbounded => LpStatus::Unbounded,
    };
    let (primal, primal_objective) = if status == LpStatus::Optimal {
        let y = sf.recover_primal(&z);
        let v = lp.value(&y);
        (Some(y), Some(v))
    } else {
        (None, None)
    };
    Ok(LpSolveOutcome {
        status,
        primal,
        primal_objective,
        dual: Some(dual),
        pivots_used: eng.pivots,
        phase1_pivots: phase1,
        basis: eng.real_basis(),
    })
}

#[derive(Debug, Clone, Copy)]
enum ColOrigin {
    Pos(usize),
    Neg(usize),
    Slack(usize),
}

struct StandardForm {
    g: DMatrix<f64>,
    h: DVector<f64>,
    c: DVector<f64>,
    /// Kept row -> (original row, sign applied).
    rows: Vec<(usize, f64)>,
    cols: Vec<ColOrigin>,
    n_eq: usize,
    n_ineq: usize,
    n_orig: usize,
    inconsistent: bool,
}

impl StandardForm {
    fn build(lp: &LinearProgram) -> Self {
        let n = lp.num_vars();
        let me = lp.eq_matrix.nrows();
        let mi = lp.ineq_matrix.nrows();
        let mut cols: Vec<ColOrigin> = (0..n).map(ColOrigin::Pos).collect();
        cols.extend((0..n).filter(|&j| !lp.nonneg[j]).map(ColOrigin::Neg));
        cols.extend((0..mi).map(ColOrigin::Slack));
        let nc = cols.len();
        let m = me + mi;
        let mut g = DMatrix::zeros(m, nc);
        let mut h = DVector::zeros(m);
        let mut c = DVector::zeros(nc);
        for (k, col) in cols.iter().enumerate() {
            match *col {
                ColOrigin::Pos(j) | ColOrigin::Neg(j) => {
                    let s = if matches!(col, ColOrigin::Pos(_)) { 1.0 } else { -1.0 };
                    c[k] = s * lp.objective[j];
                    for r in 0..me {
                        g[(r, k)] = s * lp.eq_matrix[(r, j)];
                    }
                    for r in 0..mi {
                        g[(me + r, k)] = s * lp.ineq_matrix[(r, j)];
                    }
                }
                ColOrigin::Slack(i) => g[(me + i, k)] = 1.0,
            }
        }
        for r in 0..me {
            h[r] = lp.eq_rhs[r];
        }
        for r in 0..mi {
            h[me + r] = lp.ineq_rhs[r];
        }
        let mut signs = vec![1.0; m];
        for r in 0..m {
            if h[r] < 0.0 {
                signs[r] = -1.0;
                h[r] = -h[r];
                for k in 0..nc {
                    g[(r, k)] = -g[(r, k)];
                }
            }
        }
        let (kept, inconsistent) = independent_rows(&g, &h);
        let g = g.select_rows(kept.iter());
        let h = DVector::from_iterator(kept.len(), kept.iter().map(|&r| h[r]));
        let rows = kept.iter().map(|&r| (r, signs[r])).collect();
        StandardForm { g, h, c, rows, cols, n_eq: me, n_ineq: mi, n_orig: n, inconsistent }
    }

    fn recover_primal(&self, z: &DVector<f64>) -> DVector<f64> {
        let mut y = DVector::zeros(self.n_orig);
        for (k, col) in self.cols.iter().enumerate() {
            match *col {
                ColOrigin::Pos(j) => y[j] += z[k],
                ColOrigin::Neg(j) => y[j] -= z[k],
                ColOrigin::Slack(_) => {}
            }
        }
        y
    }

    fn recover_dual(&self, lp: &LinearProgram, pi: &DVector<f64>) -> DualSolution {
        let mut eq = DVector::zeros(self.n_eq);
        let mut ineq = DVector::zeros(self.n_ineq);
        for (k, &(r, s)) in self.rows.iter().enumerate() {
            if r < self.n_eq {
                eq[r] = s * pi[k];
            } else {
                // Tiny positive values are roundoff; μ ≤ 0 is structural.
                ineq[r - self.n_eq] = (s * pi[k]).min(0.0);
            }
        }
        let objective = lp.dual_value(&eq, &ineq);
        DualSolution { eq, ineq, objective }
    }
}

/// Greedy selection of linearly independent rows of `[G | h]`, judged on the
/// `G` part. Returns the kept rows and whether a dependent row had an
/// inconsistent right-hand side.
fn independent_rows(g: &DMatrix<f64>, h: &DVector<f64>) -> (Vec<usize>, bool) {
    let mut basis: Vec<(DVector<f64>, f64)> = Vec::new();
    let mut kept = Vec::new();
    let mut inconsistent = false;
    for r in 0..g.nrows() {
        let mut v: DVector<f64> = g.row(r).transpose();
        let mut hv = h[r];
        let scale = v.norm();
        if scale == 0.0 {
            if hv.abs() > FEAS_TOL {
                inconsistent = true;
            }
            continue;
        }
        for _ in 0..2 {
            for (q, qh) in &basis {
                let coef = q.dot(&v);
                v.axpy(-coef, q, 1.0);
                hv -= coef * qh;
            }
        }
        let rest = v.norm();
        if rest <= 1e-10 * scale {
            if hv.abs() > FEAS_TOL * (1.0 + h[r].abs()) {
                inconsistent = true;
            }
        } else {
            basis.push((v / rest, hv / rest));
            kept.push(r);
        }
    }
    (kept, inconsistent)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Nonneg,
    Free,
    Artificial,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum IterEnd {
    Optimal,
    Stopped,
    Unbounded,
    Infeasible,
}

/// Revised simplex state on `min cᵀz  s.t.  Az = h` with an explicit basis
/// inverse, refactorized periodically.
struct Engine {
    a: DMatrix<f64>,
    h: DVector<f64>,
    cost: DVector<f64>,
    kinds: Vec<Kind>,
    basis: Vec<usize>,
    is_basic: Vec<bool>,
    binv: DMatrix<f64>,
    since_refactor: usize,
    pivots: usize,
    n_real: usize,
    d_tol: f64,
}

impl Engine {
    /// Starts from unit columns where available and artificial columns
    /// elsewhere, then minimizes the sum of artificials.
    fn with_kinds_phase_one(
        a: &DMatrix<f64>,
        h: &DVector<f64>,
        cost: &DVector<f64>,
        kinds: Vec<Kind>,
    ) -> Result<(Engine, bool), LpError> {
        let m = a.nrows();
        let n = a.ncols();
        let mut basis = vec![usize::MAX; m];
        let mut taken = vec![false; n];
        for j in 0..n {
            if kinds[j] != Kind::Nonneg {
                continue;
            }
            let col = a.column(j);
            let mut unit_row = None;
            let mut ok = true;
            for r in 0..m {
                let v = col[r];
                if v == 1.0 && unit_row.is_none() {
                    unit_row = Some(r);
                } else if v != 0.0 {
                    ok = false;
                    break;
                }
            }
            if let (true, Some(r)) = (ok, unit_row) {
                if basis[r] == usize::MAX && !taken[j] {
                    basis[r] = j;
                    taken[j] = true;
                }
            }
        }
        let n_art = basis.iter().filter(|&&b| b == usize::MAX).count();
        let mut full = DMatrix::zeros(m, n + n_art);
        full.columns_mut(0, n).copy_from(a);
        let mut all_kinds = kinds;
        let mut next = n;
        for r in 0..m {
            if basis[r] == usize::MAX {
                full[(r, next)] = 1.0;
                basis[r] = next;
                all_kinds.push(Kind::Artificial);
                next += 1;
            }
        }
        let mut phase_cost = DVector::zeros(n + n_art);
        for j in n..n + n_art {
            phase_cost[j] = 1.0;
        }
        let real_cost = {
            let mut c = DVector::zeros(n + n_art);
            c.rows_mut(0, n).copy_from(cost);
            c
        };
        let mut is_basic = vec![false; n + n_art];
        for &b in &basis {
            is_basic[b] = true;
        }
        let scale = 1.0 + real_cost.amax();
        let mut eng = Engine {
            a: full,
            h: h.clone(),
            cost: phase_cost,
            kinds: all_kinds,
            basis,
            is_basic,
            binv: DMatrix::identity(m, m),
            since_refactor: 0,
            pivots: 0,
            n_real: n,
            d_tol: OPT_TOL,
        };
        if n_art > 0 {
            eng.primal_iterate(None, None)?;
            let infeas: f64 = eng
                .basis
                .iter()
                .zip(eng.primal_basic().iter())
                .filter(|(b, _)| eng.kinds[**b] == Kind::Artificial)
                .map(|(_, v)| v.max(0.0))
                .sum();
            if infeas > FEAS_TOL * (1.0 + h.amax()) {
                return Ok((eng, false));
            }
            eng.drive_out_artificials()?;
        }
        eng.cost = real_cost;
        eng.d_tol = OPT_TOL * scale;
        Ok((eng, true))
    }

    fn phase_one(g: &DMatrix<f64>, h: &DVector<f64>, c: &DVector<f64>) -> Result<(Engine, bool), LpError> {
        Engine::with_kinds_phase_one(g, h, c, vec![Kind::Nonneg; g.ncols()])
    }

    /// Finds a dual-feasible basis of `Gz = h, z ≥ 0` by locating a vertex of
    /// `{π : Gᵀπ ≤ c}` with a primal simplex on that system. Returns `None`
    /// when the dual is infeasible.
    fn dual_phase_one(
        g: &DMatrix<f64>,
        h: &DVector<f64>,
        c: &DVector<f64>,
    ) -> Result<Option<(Engine, usize)>, LpError> {
        let m = g.nrows();
        let n = g.ncols();
        // Variables: π (free, m) then s (nonneg, n); rows: Gᵀπ + s = c.
        let mut a = DMatrix::zeros(n, m + n);
        let mut rhs = DVector::zeros(n);
        for j in 0..n {
            let s = if c[j] < 0.0 { -1.0 } else { 1.0 };
            for r in 0..m {
                a[(j, r)] = s * g[(r, j)];
            }
            a[(j, m + j)] = s;
            rhs[j] = s * c[j];
        }
        let mut kinds = vec![Kind::Free; m];
        kinds.extend(std::iter::repeat_n(Kind::Nonneg, n));
        let zero = DVector::zeros(m + n);
        let (mut dual_eng, feasible) = Engine::with_kinds_phase_one(&a, &rhs, &zero, kinds)?;
        if !feasible {
            return Ok(None);
        }
        dual_eng.pivot_in_free()?;
        let phase1 = dual_eng.pivots;
        let basis: Vec<usize> = (0..n).filter(|&j| !dual_eng.is_basic[m + j]).collect();
        if basis.len() != m {
            return Err(LpError::NumericalBreakdown(format!(
                "dual phase 1 produced {} basic columns for {m} rows",
                basis.len()
            )));
        }
        let mut is_basic = vec![false; n];
        for &b in &basis {
            is_basic[b] = true;
        }
        let mut eng = Engine {
            a: g.clone(),
            h: h.clone(),
            cost: c.clone(),
            kinds: vec![Kind::Nonneg; n],
            basis,
            is_basic,
            binv: DMatrix::zeros(m, m),
            since_refactor: 0,
            pivots: 0,
            n_real: n,
            d_tol: OPT_TOL * (1.0 + c.amax()),
        };
        eng.refactor()?;
        Ok(Some((eng, phase1)))
    }

    fn refactor(&mut self) -> Result<(), LpError> {
        let m = self.basis.len();
        if m == 0 {
            self.since_refactor = 0;
            return Ok(());
        }
        let b = self.a.select_columns(self.basis.iter());
        match b.lu().try_inverse() {
            Some(inv) => {
                self.binv = inv;
                self.since_refactor = 0;
                Ok(())
            }
            None => Err(LpError::NumericalBreakdown("singular basis".into())),
        }
    }

    fn primal_basic(&self) -> DVector<f64> {
        &self.binv * &self.h
    }

    fn primal_values(&self) -> DVector<f64> {
        let xb = self.primal_basic();
        let mut z = DVector::zeros(self.n_real);
        for (r, &b) in self.basis.iter().enumerate() {
            if b < self.n_real {
                z[b] = if self.kinds[b] == Kind::Nonneg { xb[r].max(0.0) } else { xb[r] };
            }
        }
        z
    }

    fn duals(&self) -> DVector<f64> {
        let cb = DVector::from_iterator(self.basis.len(), self.basis.iter().map(|&b| self.cost[b]));
        self.binv.tr_mul(&cb)
    }

    fn objective(&self) -> f64 {
        let xb = self.primal_basic();
        self.basis.iter().zip(xb.iter()).map(|(&b, v)| self.cost[b] * v).sum()
    }

    fn real_basis(&self) -> Vec<usize> {
        let mut b: Vec<usize> = self.basis.iter().copied().filter(|&b| b < self.n_real).collect();
        b.sort_unstable();
        b
    }

    fn pivot(&mut self, r: usize, j: usize) -> Result<(), LpError> {
        let alpha = &self.binv * self.a.column(j);
        let p = alpha[r];
        if p.abs() < 1e-14 {
            return Err(LpError::NumericalBreakdown(format!("zero pivot at row {r}")));
        }
        let m = self.basis.len();
        let row_r: DVector<f64> = self.binv.row(r).transpose() / p;
        for i in 0..m {
            if i == r {
                continue;
            }
            let f = alpha[i];
            if f != 0.0 {
                for k in 0..m {
                    self.binv[(i, k)] -= f * row_r[k];
                }
            }
        }
        for k in 0..m {
            self.binv[(r, k)] = row_r[k];
        }
        self.is_basic[self.basis[r]] = false;
        self.basis[r] = j;
        self.is_basic[j] = true;
        self.pivots += 1;
        self.since_refactor += 1;
        if self.since_refactor >= REFACTOR_EVERY {
            self.refactor()?;
        }
        if self.pivots > MAX_TOTAL_PIVOTS {
            return Err(LpError::NumericalBreakdown("pivot limit exceeded".into()));
        }
        Ok(())
    }

    /// Bland's-rule primal simplex from a feasible basis.
    fn primal_iterate(&mut self, cap: Option<usize>, target: Option<f64>) -> Result<IterEnd, LpError> {
        let mut taken = 0usize;
        loop {
            if let Some(t) = target {
                if self.objective() <= t {
                    return Ok(IterEnd::Stopped);
                }
            }
            let pi = self.duals();
            let mut entering = None;
            for j in 0..self.a.ncols() {
                if self.is_basic[j] || self.kinds[j] == Kind::Artificial {
                    continue;
                }
                let d = self.cost[j] - self.a.column(j).dot(&pi);
                let eligible = match self.kinds[j] {
                    Kind::Nonneg => d < -self.d_tol,
                    Kind::Free => d.abs() > self.d_tol,
                    Kind::Artificial => false,
                };
                if eligible {
                    entering = Some((j, if d > 0.0 { -1.0 } else { 1.0 }));
                    break;
                }
            }
            let Some((j, dir)) = entering else {
                return Ok(IterEnd::Optimal);
            };
            if cap.is_some_and(|c| taken >= c) {
                return Ok(IterEnd::Stopped);
            }
            let alpha = (&self.binv * self.a.column(j)) * dir;
            let xb = self.primal_basic();
            let Some(r) = self.ratio_test(&alpha, &xb) else {
                return Ok(IterEnd::Unbounded);
            };
            self.pivot(r, j)?;
            taken += 1;
        }
    }

    fn ratio_test(&self, alpha: &DVector<f64>, xb: &DVector<f64>) -> Option<usize> {
        let mut best: Option<(f64, usize, usize)> = None;
        for r in 0..alpha.len() {
            let b = self.basis[r];
            let ratio = match self.kinds[b] {
                Kind::Free => continue,
                // An artificial resting at zero must not become nonzero.
                Kind::Artificial if xb[r] <= 1e-12 && alpha[r].abs() > PIVOT_TOL => 0.0,
                Kind::Nonneg | Kind::Artificial if alpha[r] > PIVOT_TOL => xb[r].max(0.0) / alpha[r],
                Kind::Nonneg | Kind::Artificial => continue,
            };
            best = match best {
                None => Some((ratio, b, r)),
                Some((br, bb, brow)) => {
                    if ratio < br - RATIO_TIE * (1.0 + br) {
                        Some((ratio, b, r))
                    } else if ratio <= br + RATIO_TIE * (1.0 + br) && b < bb {
                        Some((br.min(ratio), b, r))
                    } else {
                        Some((br, bb, brow))
                    }
                }
            };
        }
        best.map(|(_, _, r)| r)
    }

    /// Among rows within tolerance of the minimum ratio, the one with the
    /// largest pivot magnitude. Used where any feasible step will do.
    fn widest_pivot(&self, alpha: &DVector<f64>, xb: &DVector<f64>) -> Option<(usize, f64)> {
        let ratios: Vec<(usize, f64)> = (0..alpha.len())
            .filter_map(|r| match self.kinds[self.basis[r]] {
                Kind::Free => None,
                Kind::Artificial if xb[r] <= 1e-12 && alpha[r].abs() > PIVOT_TOL => Some((r, 0.0)),
                _ if alpha[r] > PIVOT_TOL => Some((r, xb[r].max(0.0) / alpha[r])),
                _ => None,
            })
            .collect();
        let min = ratios.iter().map(|&(_, t)| t).fold(f64::INFINITY, f64::min);
        let tol = 1e-9 * (1.0 + min);
        ratios
            .into_iter()
            .filter(|&(_, t)| t <= min + tol)
            .map(|(r, _)| (r, alpha[r].abs()))
            .max_by(|x, y| x.1.total_cmp(&y.1))
    }

    /// Bland's-rule dual simplex from a dual-feasible basis.
    fn dual_iterate(&mut self, cap: Option<usize>, target: Option<f64>) -> Result<IterEnd, LpError> {
        let mut taken = 0usize;
        let feas = FEAS_TOL * (1.0 + self.h.amax());
        loop {
            let xb = self.primal_basic();
            if let Some(t) = target {
                if self.objective() >= t {
                    return Ok(IterEnd::Stopped);
                }
            }
            let mut leave: Option<(usize, usize)> = None;
            for r in 0..xb.len() {
                let b = self.basis[r];
                if self.kinds[b] == Kind::Nonneg && xb[r] < -feas && leave.is_none_or(|(_, lb)| b < lb) {
                    leave = Some((r, b));
                }
            }
            let Some((r, _)) = leave else {
                return Ok(IterEnd::Optimal);
            };
            if cap.is_some_and(|c| taken >= c) {
                return Ok(IterEnd::Stopped);
            }
            let pi = self.duals();
            let rho = self.binv.row(r).transpose();
            let row: Vec<(usize, f64)> = (0..self.a.ncols())
                .filter(|&j| !self.is_basic[j] && self.kinds[j] == Kind::Nonneg)
                .map(|j| (j, self.a.column(j).dot(&rho)))
                .collect();
            // Tiny pivots wreck the basis inverse; use them only as a last resort.
            let strict = DUAL_PIVOT_REL * row.iter().fold(1.0f64, |m, &(_, v)| m.max(v.abs()));
            let mut best: Option<(f64, usize)> = None;
            for tol in [strict, PIVOT_TOL] {
                for &(j, arj) in &row {
                    if arj >= -tol {
                        continue;
                    }
                    let d = (self.cost[j] - self.a.column(j).dot(&pi)).max(0.0);
                    let ratio = d / -arj;
                    best = match best {
                        Some((br, bj)) if ratio >= br - RATIO_TIE * (1.0 + br) => Some((br.min(ratio), bj)),
                        _ => Some((ratio, j)),
                    };
                }
                if best.is_some() {
                    break;
                }
            }
            let Some((_, j)) = best else {
                return Ok(IterEnd::Infeasible);
            };
            self.pivot(r, j)?;
            taken += 1;
        }
    }

    fn drive_out_artificials(&mut self) -> Result<(), LpError> {
        for r in 0..self.basis.len() {
            if self.kinds[self.basis[r]] != Kind::Artificial {
                continue;
            }
            let row = self.binv.row(r).transpose();
            let mut chosen = None;
            for j in 0..self.a.ncols() {
                if self.is_basic[j] || self.kinds[j] == Kind::Artificial {
                    continue;
                }
                if self.a.column(j).dot(&row).abs() > 1e-7 {
                    chosen = Some(j);
                    break;
                }
            }
            if let Some(j) = chosen {
                self.pivot(r, j)?;
            }
        }
        Ok(())
    }

    /// Brings every nonbasic free column into the basis without losing
    /// feasibility; free columns never leave afterwards.
    fn pivot_in_free(&mut self) -> Result<(), LpError> {
        for j in 0..self.a.ncols() {
            if self.kinds[j] != Kind::Free || self.is_basic[j] {
                continue;
            }
            let alpha = &self.binv * self.a.column(j);
            let xb = self.primal_basic();
            let r = [self.widest_pivot(&alpha, &xb), self.widest_pivot(&(-&alpha), &xb)]
                .into_iter()
                .flatten()
                .max_by(|x, y| x.1.total_cmp(&y.1))
                .map(|(r, _)| r);
            match r {
                Some(r) => self.pivot(r, j)?,
                None => {
                    return Err(LpError::NumericalBreakdown(
                        "free column cannot enter: constraint matrix is rank deficient".into(),
                    ))
                }
            }
        }
        if self.basis.iter().any(|&b| self.kinds[b] == Kind::Artificial) {
            return Err(LpError::NumericalBreakdown("artificial column left in basis".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lp1(c: &[f64], a: &[&[f64]], b: &[f64]) -> LinearProgram {
        let n = c.len();
        let a = DMatrix::from_fn(a.len(), n, |i, j| a[i][j]);
        LinearProgram::equality_form(DVector::from_column_slice(c), a, DVector::from_column_slice(b)).unwrap()
    }

    #[test]
    fn single_variable_identity() {
        let lp = lp1(&[1.0], &[&[1.0]], &[1.0]);
        let out = solve_exact(&lp).unwrap();
        assert_eq!(out.status, LpStatus::Optimal);
        assert!((out.primal.unwrap()[0] - 1.0).abs() < 1e-12);
        assert!((out.dual.unwrap().eq[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn unbounded_ray() {
        let lp = lp1(&[-1.0], &[], &[]);
        assert_eq!(solve_exact(&lp).unwrap().status, LpStatus::Unbounded);
        assert_eq!(solve_dual_capped(&lp, 10).unwrap().status, LpStatus::Unbounded);
    }

    #[test]
    fn infeasible_rows() {
        let lp = lp1(&[1.0, 1.0], &[&[1.0, 1.0], &[1.0, 1.0]], &[1.0, 2.0]);
        assert_eq!(solve_exact(&lp).unwrap().status, LpStatus::Infeasible);
        let lp = lp1(&[1.0], &[&[1.0]], &[-1.0]);
        assert_eq!(solve_exact(&lp).unwrap().status, LpStatus::Infeasible);
        assert_eq!(solve_dual_capped(&lp, 100).unwrap().status, LpStatus::Infeasible);
    }

    #[test]
    fn redundant_rows_are_dropped() {
        let lp = lp1(&[1.0, 2.0], &[&[1.0, 1.0], &[2.0, 2.0]], &[1.0, 2.0]);
        let out = solve_exact(&lp).unwrap();
        assert_eq!(out.status, LpStatus::Optimal);
        assert!((out.primal_objective.unwrap() - 1.0).abs() < 1e-12);
        let d = solve_dual_capped(&lp, 100).unwrap();
        assert!((d.dual_objective().unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn free_variable_and_inequalities() {
        // min y s.t. y ≥ 0.5, y ≤ 2, y free.
        let lp = LinearProgram::new(
            DVector::from_column_slice(&[1.0]),
            DMatrix::zeros(0, 1),
            DVector::zeros(0),
            DMatrix::from_row_slice(2, 1, &[-1.0, 1.0]),
            DVector::from_column_slice(&[-0.5, 2.0]),
            vec![false],
        )
        .unwrap();
        let out = solve_exact(&lp).unwrap();
        assert!((out.primal_objective.unwrap() - 0.5).abs() < 1e-12);
        let d = out.dual.unwrap();
        assert!(d.ineq.iter().all(|&m| m <= 0.0));
        assert!((d.objective - 0.5).abs() < 1e-12);
        let capped = solve_primal_capped(&lp, 0).unwrap();
        let y = capped.primal.unwrap()[0];
        assert!((0.5 - 1e-9..=2.0 + 1e-9).contains(&y));
        let dd = solve_dual_capped(&lp, 0).unwrap();
        assert!(dd.dual_objective().unwrap() <= 0.5 + 1e-12);
    }
}

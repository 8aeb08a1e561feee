//! Inexact cuts for value functions of small convex programs
//!
//! ```text
//! Q(x) = min f(y, x)  s.t.  y ∈ Y,  Ay + Bx = b,  g(y, x) ≤ 0
//! ```
//!
//! with polynomial `f` and `g`, a box or polytope `Y` and a box `X`. Given
//! ε-optimal primal and dual points at `x̄`, [`build_inexact_cut`] returns an
//! affine minorant of `Q` whose distance to `Q(x̄)` is at most `ε + ℓ`, where
//! `ℓ` is the optimal value of a linear program over `Y` ([`compute_ell`]).
//! [`refine_gap_bound`] tightens that distance under Lipschitz-gradient
//! constants, [`dual_norm_bound`] bounds the norm of ε-optimal multipliers,
//! and [`build_nlp_stage_cut`] assembles the multistage version of the cut.
//!
//! [`oracle`] holds deterministic search routines used to produce ε-optimal
//! points and reference values; [`fixtures`] reads the documented test
//! problems and checks them end to end.

pub mod fixtures;
pub mod oracle;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::cuts::Cut;
use crate::lp::{self, LinearProgram, LpError, LpStatus};

/// Feasibility tolerance for candidate primal points.
pub const PRIMAL_TOL: f64 = 1e-7;

#[derive(Debug, Error)]
pub enum ConvexError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("not convex: {0}")]
    NotConvex(String),
    #[error("gradient check failed: {0}")]
    GradientCheck(String),
    #[error("ground set is unbounded or empty")]
    UnboundedY,
    #[error("primal point is infeasible: {0}")]
    InfeasiblePrimal(String),
    #[error("multiplier {index} is negative ({value})")]
    NonnegativityViolation { index: usize, value: f64 },
    #[error("constraint {index} is not strictly negative at the Slater point ({value})")]
    SlaterViolation { index: usize, value: f64 },
    #[error("radius {radius} exceeds kappa / (2 L(g)) = {limit}")]
    InvalidRadius { radius: f64, limit: f64 },
    #[error("A restricted to the subspace is the zero map")]
    ZeroMap,
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("unsupported by this oracle: {0}")]
    Unsupported(String),
    #[error("fixture {name}: {message}")]
    Fixture { name: String, message: String },
    #[error(transparent)]
    Lp(#[from] LpError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// `c + a_yᵀy + a_xᵀx + ½yᵀQ_yy y + yᵀQ_yx x + ½xᵀQ_xx x + Σ q_i y_i⁴`.
///
/// Convex exactly when the joint quadratic block is positive semidefinite and
/// every quartic coefficient is nonnegative.
#[derive(Debug, Clone, PartialEq)]
pub struct Polynomial {
    pub constant: f64,
    pub linear_y: DVector<f64>,
    pub linear_x: DVector<f64>,
    pub quad_yy: DMatrix<f64>,
    pub quad_yx: DMatrix<f64>,
    pub quad_xx: DMatrix<f64>,
    pub quartic_y: DVector<f64>,
}

impl Polynomial {
    pub fn zero(n: usize, m: usize) -> Self {
        Polynomial {
            constant: 0.0,
            linear_y: DVector::zeros(n),
            linear_x: DVector::zeros(m),
            quad_yy: DMatrix::zeros(n, n),
            quad_yx: DMatrix::zeros(n, m),
            quad_xx: DMatrix::zeros(m, m),
            quartic_y: DVector::zeros(n),
        }
    }

    pub fn n(&self) -> usize {
        self.linear_y.len()
    }

    pub fn m(&self) -> usize {
        self.linear_x.len()
    }

    pub fn value(&self, y: &[f64], x: &[f64]) -> f64 {
        let (n, m) = (self.n(), self.m());
        let mut v = self.constant;
        for i in 0..n {
            let yi = y[i];
            v += self.linear_y[i] * yi + self.quartic_y[i] * yi * yi * yi * yi;
            let mut row = 0.5 * self.quad_yy[(i, i)] * yi;
            for j in 0..i {
                row += self.quad_yy[(i, j)] * y[j];
            }
            for j in 0..m {
                row += self.quad_yx[(i, j)] * x[j];
            }
            v += yi * row;
        }
        for j in 0..m {
            let xj = x[j];
            let mut row = self.linear_x[j] + 0.5 * self.quad_xx[(j, j)] * xj;
            for k in 0..j {
                row += self.quad_xx[(j, k)] * x[k];
            }
            v += xj * row;
        }
        v
    }

    pub fn grad_y(&self, y: &DVector<f64>, x: &DVector<f64>) -> DVector<f64> {
        let mut g = &self.linear_y + &self.quad_yy * y + &self.quad_yx * x;
        for i in 0..self.n() {
            g[i] += 4.0 * self.quartic_y[i] * y[i].powi(3);
        }
        g
    }

    pub fn grad_x(&self, y: &DVector<f64>, x: &DVector<f64>) -> DVector<f64> {
        &self.linear_x + self.quad_yx.tr_mul(y) + &self.quad_xx * x
    }

    fn check(&self, n: usize, m: usize, what: &str) -> Result<(), ConvexError> {
        let ok = self.linear_y.len() == n
            && self.linear_x.len() == m
            && self.quad_yy.shape() == (n, n)
            && self.quad_yx.shape() == (n, m)
            && self.quad_xx.shape() == (m, m)
            && self.quartic_y.len() == n;
        if !ok {
            return Err(ConvexError::DimensionMismatch(format!("{what} does not have shape ({n}, {m})")));
        }
        let sym = |q: &DMatrix<f64>| (q - q.transpose()).amax() <= 1e-12 * (1.0 + q.amax());
        if !sym(&self.quad_yy) || !sym(&self.quad_xx) {
            return Err(ConvexError::InvalidInput(format!("{what}: quadratic blocks must be symmetric")));
        }
        let mut joint = DMatrix::zeros(n + m, n + m);
        joint.view_mut((0, 0), (n, n)).copy_from(&self.quad_yy);
        joint.view_mut((0, n), (n, m)).copy_from(&self.quad_yx);
        joint.view_mut((n, 0), (m, n)).copy_from(&self.quad_yx.transpose());
        joint.view_mut((n, n), (m, m)).copy_from(&self.quad_xx);
        if n + m > 0 {
            let min_eig = joint.symmetric_eigenvalues().min();
            if min_eig < -1e-10 * (1.0 + joint.amax()) {
                return Err(ConvexError::NotConvex(format!("{what}: quadratic part has eigenvalue {min_eig}")));
            }
        }
        if let Some(i) = self.quartic_y.iter().position(|&q| q < 0.0) {
            return Err(ConvexError::NotConvex(format!("{what}: quartic coefficient {i} is negative")));
        }
        Ok(())
    }
}

/// Ground set `Y`: a box or `{y : Gy ≤ h}`; both must be bounded.
#[derive(Debug, Clone, PartialEq)]
pub enum GroundSet {
    Box { lower: DVector<f64>, upper: DVector<f64> },
    Polytope { matrix: DMatrix<f64>, rhs: DVector<f64> },
}

impl GroundSet {
    pub fn dim(&self) -> usize {
        match self {
            GroundSet::Box { lower, .. } => lower.len(),
            GroundSet::Polytope { matrix, .. } => matrix.ncols(),
        }
    }

    /// `(G, h)` with `Y = {y : Gy ≤ h}`.
    pub fn inequalities(&self) -> (DMatrix<f64>, DVector<f64>) {
        match self {
            GroundSet::Box { lower, upper } => {
                let n = lower.len();
                let mut g = DMatrix::zeros(2 * n, n);
                let mut h = DVector::zeros(2 * n);
                for i in 0..n {
                    g[(i, i)] = 1.0;
                    h[i] = upper[i];
                    g[(n + i, i)] = -1.0;
                    h[n + i] = -lower[i];
                }
                (g, h)
            }
            GroundSet::Polytope { matrix, rhs } => (matrix.clone(), rhs.clone()),
        }
    }

    pub fn contains(&self, y: &DVector<f64>, tol: f64) -> bool {
        let (g, h) = self.inequalities();
        y.len() == self.dim() && (g * y - h).iter().all(|&v| v <= tol)
    }

    /// Coordinate bounds of `Y`, from LPs when `Y` is a polytope.
    pub fn bounding_box(&self) -> Result<(DVector<f64>, DVector<f64>), ConvexError> {
        match self {
            GroundSet::Box { lower, upper } => Ok((lower.clone(), upper.clone())),
            GroundSet::Polytope { .. } => {
                let n = self.dim();
                let mut lo = DVector::zeros(n);
                let mut hi = DVector::zeros(n);
                for i in 0..n {
                    let mut e = DVector::zeros(n);
                    e[i] = 1.0;
                    lo[i] = self.minimize_linear(&e)?;
                    hi[i] = -self.minimize_linear(&(-e))?;
                }
                Ok((lo, hi))
            }
        }
    }

    /// Upper bound on the diameter: the diagonal of the bounding box.
    pub fn diameter_bound(&self) -> Result<f64, ConvexError> {
        let (lo, hi) = self.bounding_box()?;
        Ok((hi - lo).norm())
    }

    /// `min_{y ∈ Y} ⟨d, y⟩`.
    pub fn minimize_linear(&self, d: &DVector<f64>) -> Result<f64, ConvexError> {
        let (g, h) = self.inequalities();
        minimize_over(&g, &h, d)
    }

    fn validate(&self) -> Result<(), ConvexError> {
        match self {
            GroundSet::Box { lower, upper } => {
                if lower.len() != upper.len() {
                    return Err(ConvexError::DimensionMismatch("box bounds differ in length".into()));
                }
                if lower.iter().zip(upper.iter()).any(|(l, u)| !(l.is_finite() && u.is_finite() && l <= u)) {
                    return Err(ConvexError::UnboundedY);
                }
                Ok(())
            }
            GroundSet::Polytope { matrix, rhs } => {
                if matrix.nrows() != rhs.len() {
                    return Err(ConvexError::DimensionMismatch("polytope rows and rhs differ".into()));
                }
                self.bounding_box().map(|_| ())
            }
        }
    }
}

fn minimize_over(g: &DMatrix<f64>, h: &DVector<f64>, d: &DVector<f64>) -> Result<f64, ConvexError> {
    let n = d.len();
    let lp = LinearProgram::new(d.clone(), DMatrix::zeros(0, n), DVector::zeros(0), g.clone(), h.clone(), vec![false; n])?;
    let out = lp::solve_exact(&lp)?;
    match out.status {
        LpStatus::Optimal => Ok(out.primal_objective.expect("optimal outcome has a value")),
        _ => Err(ConvexError::UnboundedY),
    }
}

/// Value function of `min f(y,x) : y ∈ Y, Ay + Bx = b, g(y,x) ≤ 0` on `x ∈ X`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvexValueFunctionSpec {
    pub objective: Polynomial,
    pub constraints: Vec<Polynomial>,
    pub a: DMatrix<f64>,
    pub b_mat: DMatrix<f64>,
    pub rhs: DVector<f64>,
    pub y_set: GroundSet,
    pub x_lower: DVector<f64>,
    pub x_upper: DVector<f64>,
}

impl ConvexValueFunctionSpec {
    pub fn n(&self) -> usize {
        self.objective.n()
    }

    pub fn m(&self) -> usize {
        self.objective.m()
    }

    /// Number of equality rows.
    pub fn q(&self) -> usize {
        self.a.nrows()
    }

    /// Number of inequality constraints.
    pub fn p(&self) -> usize {
        self.constraints.len()
    }

    /// Shape, convexity and boundedness checks plus a finite-difference
    /// gradient check at random interior points.
    pub fn validate(&self) -> Result<(), ConvexError> {
        let (n, m, q) = (self.n(), self.m(), self.q());
        self.objective.check(n, m, "objective")?;
        for (i, g) in self.constraints.iter().enumerate() {
            g.check(n, m, &format!("constraint {}", i + 1))?;
        }
        if self.a.shape() != (q, n) || self.b_mat.shape() != (q, m) || self.rhs.len() != q {
            return Err(ConvexError::DimensionMismatch(format!(
                "coupling: A is {:?}, B is {:?}, b has {} entries; expected ({q}, {n}), ({q}, {m})",
                self.a.shape(),
                self.b_mat.shape(),
                self.rhs.len()
            )));
        }
        if self.y_set.dim() != n {
            return Err(ConvexError::DimensionMismatch(format!("Y has dimension {}, y has {n}", self.y_set.dim())));
        }
        if self.x_lower.len() != m || self.x_upper.len() != m {
            return Err(ConvexError::DimensionMismatch(format!("X bounds must have {m} entries")));
        }
        if self.x_lower.iter().zip(self.x_upper.iter()).any(|(l, u)| !(l <= u)) {
            return Err(ConvexError::InvalidInput("X box has lower > upper".into()));
        }
        self.y_set.validate()?;
        self.check_gradients(8, 0x5eed)
    }

    /// Compares closed-form gradients with central differences at `samples`
    /// random points of the bounding boxes.
    pub fn check_gradients(&self, samples: usize, seed: u64) -> Result<(), ConvexError> {
        let (ylo, yhi) = self.y_set.bounding_box()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = 1e-6;
        for _ in 0..samples {
            let y = DVector::from_fn(self.n(), |i, _| ylo[i] + (yhi[i] - ylo[i]) * rng.random::<f64>());
            let x = DVector::from_fn(self.m(), |j, _| {
                self.x_lower[j] + (self.x_upper[j] - self.x_lower[j]) * rng.random::<f64>()
            });
            for (k, poly) in std::iter::once(&self.objective).chain(&self.constraints).enumerate() {
                let gy = poly.grad_y(&y, &x);
                let gx = poly.grad_x(&y, &x);
                let fd = |dy: &DVector<f64>, dx: &DVector<f64>| {
                    let (yp, xp) = (&y + dy, &x + dx);
                    let (ym, xm) = (&y - dy, &x - dx);
                    (poly.value(yp.as_slice(), xp.as_slice()) - poly.value(ym.as_slice(), xm.as_slice())) / (2.0 * h)
                };
                let close = |a: f64, b: f64| (a - b).abs() <= 1e-5 * (1.0 + a.abs().max(b.abs()));
                for i in 0..self.n() {
                    let mut dy = DVector::zeros(self.n());
                    dy[i] = h;
                    let num = fd(&dy, &DVector::zeros(self.m()));
                    if !close(gy[i], num) {
                        return Err(ConvexError::GradientCheck(format!("function {k}, d/dy_{}: {} vs {num}", i + 1, gy[i])));
                    }
                }
                for j in 0..self.m() {
                    let mut dx = DVector::zeros(self.m());
                    dx[j] = h;
                    let num = fd(&DVector::zeros(self.n()), &dx);
                    if !close(gx[j], num) {
                        return Err(ConvexError::GradientCheck(format!("function {k}, d/dx_{}: {} vs {num}", j + 1, gx[j])));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn objective_value(&self, y: &DVector<f64>, x: &DVector<f64>) -> f64 {
        self.objective.value(y.as_slice(), x.as_slice())
    }

    pub fn constraint_values(&self, y: &DVector<f64>, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(self.p(), self.constraints.iter().map(|g| g.value(y.as_slice(), x.as_slice())))
    }

    /// `Ay + Bx − b`.
    pub fn equality_residual(&self, y: &DVector<f64>, x: &DVector<f64>) -> DVector<f64> {
        &self.a * y + &self.b_mat * x - &self.rhs
    }

    /// `L_x(y, λ, μ) = f + ⟨λ, Ay + Bx − b⟩ + ⟨μ, g⟩`.
    pub fn lagrangian(&self, y: &DVector<f64>, x: &DVector<f64>, lambda: &DVector<f64>, mu: &DVector<f64>) -> f64 {
        self.objective_value(y, x) + lambda.dot(&self.equality_residual(y, x)) + mu.dot(&self.constraint_values(y, x))
    }

    pub fn lagrangian_grad_y(
        &self,
        y: &DVector<f64>,
        x: &DVector<f64>,
        lambda: &DVector<f64>,
        mu: &DVector<f64>,
    ) -> DVector<f64> {
        let mut g = self.objective.grad_y(y, x) + self.a.tr_mul(lambda);
        for (gi, &mi) in self.constraints.iter().zip(mu.iter()) {
            g += gi.grad_y(y, x) * mi;
        }
        g
    }

    pub fn lagrangian_grad_x(
        &self,
        y: &DVector<f64>,
        x: &DVector<f64>,
        lambda: &DVector<f64>,
        mu: &DVector<f64>,
    ) -> DVector<f64> {
        let mut g = self.objective.grad_x(y, x) + self.b_mat.tr_mul(lambda);
        for (gi, &mi) in self.constraints.iter().zip(mu.iter()) {
            g += gi.grad_x(y, x) * mi;
        }
        g
    }

    fn check_point(
        &self,
        x: &DVector<f64>,
        y: &DVector<f64>,
        lambda: &DVector<f64>,
        mu: &DVector<f64>,
    ) -> Result<(), ConvexError> {
        if x.len() != self.m() || y.len() != self.n() || lambda.len() != self.q() || mu.len() != self.p() {
            return Err(ConvexError::DimensionMismatch(format!(
                "x: {}, y: {}, λ: {}, μ: {}; expected {}, {}, {}, {}",
                x.len(),
                y.len(),
                lambda.len(),
                mu.len(),
                self.m(),
                self.n(),
                self.q(),
                self.p()
            )));
        }
        if let Some((index, &value)) = mu.iter().enumerate().find(|(_, v)| **v < 0.0) {
            return Err(ConvexError::NonnegativityViolation { index, value });
        }
        if !self.y_set.contains(y, PRIMAL_TOL) {
            return Err(ConvexError::InfeasiblePrimal("point lies outside Y".into()));
        }
        let res = self.equality_residual(y, x).amax();
        if res > PRIMAL_TOL * (1.0 + self.rhs.amax()) {
            return Err(ConvexError::InfeasiblePrimal(format!("equality residual {res:e}")));
        }
        if let Some((i, v)) = self.constraint_values(y, x).iter().enumerate().find(|(_, v)| **v > PRIMAL_TOL) {
            return Err(ConvexError::InfeasiblePrimal(format!("constraint {} has value {v:e}", i + 1)));
        }
        Ok(())
    }
}

/// `max_{u ∈ {Gu ≤ h}} ⟨d, û − u⟩`, clamped at zero against roundoff.
fn ell_over(g: &DMatrix<f64>, h: &DVector<f64>, d: &DVector<f64>, u_hat: &DVector<f64>) -> Result<f64, ConvexError> {
    let min = minimize_over(g, h, d)?;
    Ok((d.dot(u_hat) - min).max(0.0))
}

/// `ℓ(ŷ, x̄, λ̂, μ̂) = max_{y ∈ Y} ⟨∇_y L_x̄(ŷ, λ̂, μ̂), ŷ − y⟩`, solved as an LP.
pub fn compute_ell(
    spec: &ConvexValueFunctionSpec,
    x_bar: &DVector<f64>,
    y_hat: &DVector<f64>,
    lambda: &DVector<f64>,
    mu: &DVector<f64>,
) -> Result<f64, ConvexError> {
    let d = spec.lagrangian_grad_y(y_hat, x_bar, lambda, mu);
    let (g, h) = spec.y_set.inequalities();
    ell_over(&g, &h, &d, y_hat)
}

/// Data behind the tightened distance bound.
#[derive(Debug, Clone, PartialEq)]
pub struct Refinement {
    pub m1: f64,
    pub m2: f64,
    pub m3: f64,
    /// Bound on `‖μ̂‖₁` from the Slater point.
    pub u: f64,
    pub diameter: f64,
    pub lower_bound: f64,
    pub bound: f64,
}

/// An inexact cut together with what is known about its distance to `Q(x̄)`.
#[derive(Debug, Clone, PartialEq)]
pub struct InexactCutCertificate {
    pub cut: Cut,
    pub x_bar: DVector<f64>,
    pub lagrangian_value: f64,
    pub ell_value: f64,
    pub epsilon: f64,
    /// `ε + ℓ`.
    pub bound: f64,
    pub refinement: Option<Refinement>,
}

impl InexactCutCertificate {
    pub fn value(&self, x: &DVector<f64>) -> f64 {
        self.cut.value(x)
    }

    /// Best available bound on `Q(x̄) − C(x̄)`.
    pub fn best_bound(&self) -> f64 {
        self.refinement.as_ref().map_or(self.bound, |r| r.bound.min(self.bound))
    }
}

/// `C(x) = L_x̄(ŷ, λ̂, μ̂) − ℓ + ⟨∇_x L_x̄(ŷ, λ̂, μ̂), x − x̄⟩`.
pub fn build_inexact_cut(
    spec: &ConvexValueFunctionSpec,
    x_bar: &DVector<f64>,
    y_hat: &DVector<f64>,
    lambda: &DVector<f64>,
    mu: &DVector<f64>,
    epsilon: f64,
) -> Result<InexactCutCertificate, ConvexError> {
    if !(epsilon >= 0.0) {
        return Err(ConvexError::InvalidInput(format!("epsilon must be nonnegative, got {epsilon}")));
    }
    spec.check_point(x_bar, y_hat, lambda, mu)?;
    let ell = compute_ell(spec, x_bar, y_hat, lambda, mu)?;
    let lag = spec.lagrangian(y_hat, x_bar, lambda, mu);
    let gradient = spec.lagrangian_grad_x(y_hat, x_bar, lambda, mu);
    let intercept = lag - ell - gradient.dot(x_bar);
    Ok(InexactCutCertificate {
        cut: Cut { intercept, gradient, stage: 0, iteration: 0, achieved_eps: None },
        x_bar: x_bar.clone(),
        lagrangian_value: lag,
        ell_value: ell,
        epsilon,
        bound: epsilon + ell,
        refinement: None,
    })
}

/// Objective and constraint values at a strictly feasible point of `x̄`.
#[derive(Debug, Clone, PartialEq)]
pub struct SlaterValues {
    pub objective: f64,
    pub constraints: Vec<f64>,
}

impl SlaterValues {
    pub fn at(spec: &ConvexValueFunctionSpec, y: &DVector<f64>, x: &DVector<f64>) -> Self {
        SlaterValues {
            objective: spec.objective_value(y, x),
            constraints: spec.constraint_values(y, x).iter().copied().collect(),
        }
    }
}

/// Tightened bound on `Q(x̄) − C(x̄)` from gradient Lipschitz constants `M₁`
/// (objective) and `M₂` (constraints), the diameter of `Y`, a lower bound on
/// `Q(x̄)`, and a Slater point.
///
/// With `M₃ = M₁ + U·M₂` and `U = (f(y_s) − 𝓛 + ε) / min_i(−g_i(y_s))`, the
/// result is `ε + ℓ − ℓ²/(2M₃D²)` when `ℓ ≤ M₃D²` and `ε + ℓ/2` otherwise.
pub fn refine_gap_bound(
    cert: &InexactCutCertificate,
    m1: f64,
    m2: f64,
    diameter: f64,
    lower_bound: f64,
    slater: &SlaterValues,
) -> Result<Refinement, ConvexError> {
    if !(m1 >= 0.0 && m2 >= 0.0 && diameter >= 0.0) {
        return Err(ConvexError::InvalidInput("M1, M2 and the diameter must be nonnegative".into()));
    }
    if let Some((index, &value)) = slater.constraints.iter().enumerate().find(|(_, v)| **v >= 0.0) {
        return Err(ConvexError::SlaterViolation { index, value });
    }
    let eps = cert.epsilon;
    let ell = cert.ell_value;
    let u = if slater.constraints.is_empty() {
        0.0
    } else {
        let margin = slater.constraints.iter().map(|v| -v).fold(f64::INFINITY, f64::min);
        ((slater.objective - lower_bound + eps) / margin).max(0.0)
    };
    let m3 = m1 + u * m2;
    let curv = m3 * diameter * diameter;
    let bound = if ell <= curv { eps + ell - ell * ell / (2.0 * curv).max(f64::MIN_POSITIVE) } else { eps + 0.5 * ell };
    let bound = if ell == 0.0 { eps } else { bound };
    Ok(Refinement { m1, m2, m3, u, diameter, lower_bound, bound })
}

/// Inputs of the bound on `‖(λ, μ)‖` for ε-optimal multipliers.
///
/// Passing an upper envelope `f̄(y₀)` and its constant `L(f̄)` in place of
/// `f(y₀)` and `L(f)` gives the envelope form of the bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DualNormBoundInputs {
    pub objective_at_slater: f64,
    pub lower_bound: f64,
    pub epsilon: f64,
    pub lipschitz_objective: f64,
    pub lipschitz_constraints: f64,
    pub radius: f64,
    pub kappa: f64,
    pub rho_star: f64,
}

/// `(f(y₀) − 𝓛 + ε + L(f)·r) / min(ρ_*, κ/2)`.
pub fn dual_norm_bound(inputs: &DualNormBoundInputs) -> Result<f64, ConvexError> {
    let DualNormBoundInputs {
        objective_at_slater,
        lower_bound,
        epsilon,
        lipschitz_objective,
        lipschitz_constraints,
        radius,
        kappa,
        rho_star,
    } = *inputs;
    if !(kappa > 0.0 && rho_star > 0.0 && radius > 0.0 && epsilon >= 0.0) {
        return Err(ConvexError::InvalidInput("kappa, rho_star and radius must be positive, epsilon nonnegative".into()));
    }
    if !(lipschitz_objective >= 0.0 && lipschitz_constraints >= 0.0) {
        return Err(ConvexError::InvalidInput("Lipschitz constants must be nonnegative".into()));
    }
    if lipschitz_constraints > 0.0 {
        let limit = kappa / (2.0 * lipschitz_constraints);
        if radius > limit {
            return Err(ConvexError::InvalidRadius { radius, limit });
        }
    }
    let num = objective_at_slater - lower_bound + epsilon + lipschitz_objective * radius;
    Ok(num / rho_star.min(kappa / 2.0))
}

/// `ρ_* = r · σ_min⁺(A V)` for an orthonormal basis `V` (columns) of the
/// direction space of `Aff(Y)`, where `σ_min⁺` is the smallest nonzero
/// singular value. For unit `z ∈ A·V_Y` the largest `t` with
/// `tz ∈ A(B(0,r) ∩ V_Y)` is `r / ‖(AV)⁺z‖`, whose minimum is attained on the
/// left singular vector of `σ_min⁺`.
pub fn compute_rho_star(a: &DMatrix<f64>, basis: &DMatrix<f64>, radius: f64) -> Result<f64, ConvexError> {
    if a.ncols() != basis.nrows() {
        return Err(ConvexError::DimensionMismatch(format!(
            "A has {} columns, basis vectors have {} entries",
            a.ncols(),
            basis.nrows()
        )));
    }
    if !(radius > 0.0) {
        return Err(ConvexError::InvalidInput(format!("radius must be positive, got {radius}")));
    }
    let gram = basis.tr_mul(basis);
    if (gram - DMatrix::identity(basis.ncols(), basis.ncols())).amax() > 1e-8 {
        return Err(ConvexError::InvalidInput("subspace basis is not orthonormal".into()));
    }
    let av = a * basis;
    if av.is_empty() {
        return Err(ConvexError::ZeroMap);
    }
    let sv = av.singular_values();
    let smax = sv.max();
    if smax <= 1e-14 {
        return Err(ConvexError::ZeroMap);
    }
    let smin = sv.iter().copied().filter(|&s| s > 1e-10 * smax).fold(f64::INFINITY, f64::min);
    Ok(radius * smin)
}

/// Primal and dual points of one realization in a stage cut.
#[derive(Debug, Clone, Copy)]
pub struct NlpRealization<'a> {
    pub spec: &'a ConvexValueFunctionSpec,
    pub probability: f64,
    pub primal: &'a DVector<f64>,
    pub lambda: &'a DVector<f64>,
    pub mu: &'a DVector<f64>,
}

/// Coefficients of one realization's cut.
#[derive(Debug, Clone, PartialEq)]
pub struct RealizationCoefficients {
    pub theta: f64,
    pub eta: f64,
    pub beta: DVector<f64>,
}

/// `C(x) = θ − η + ⟨β, x − x_n⟩`, the probability-weighted sum of realization
/// cuts for the stage cost-to-go.
#[derive(Debug, Clone, PartialEq)]
pub struct NlpStageCut {
    pub theta: f64,
    pub eta: f64,
    pub beta: DVector<f64>,
    pub x_trial: DVector<f64>,
    pub epsilon: f64,
    pub realizations: Vec<RealizationCoefficients>,
}

impl NlpStageCut {
    pub fn value(&self, x: &DVector<f64>) -> f64 {
        self.theta - self.eta + self.beta.dot(&(x - &self.x_trial))
    }

    pub fn to_cut(&self, stage: usize, iteration: usize) -> Cut {
        Cut {
            intercept: self.theta - self.eta - self.beta.dot(&self.x_trial),
            gradient: self.beta.clone(),
            stage,
            iteration,
            achieved_eps: None,
        }
    }
}

/// Stage cut at the trial state `x_n`.
///
/// Each realization's problem is `min f(y, x_n) + 𝒬(y)` with `𝒬` the max of
/// `pool` (zero when the pool is empty). The epigraph variable joins `y` in
/// the ℓ-LP, whose feasible set is `Y` intersected with the pool's rows.
pub fn build_nlp_stage_cut(
    x_n: &DVector<f64>,
    pool: &[Cut],
    realizations: &[NlpRealization<'_>],
    epsilon: f64,
) -> Result<NlpStageCut, ConvexError> {
    if realizations.is_empty() {
        return Err(ConvexError::InvalidInput("no realizations supplied".into()));
    }
    if !(epsilon >= 0.0) {
        return Err(ConvexError::InvalidInput(format!("epsilon must be nonnegative, got {epsilon}")));
    }
    let mut theta = 0.0;
    let mut eta = 0.0;
    let mut beta = DVector::zeros(x_n.len());
    let mut parts = Vec::with_capacity(realizations.len());
    for r in realizations {
        let spec = r.spec;
        spec.check_point(x_n, r.primal, r.lambda, r.mu)?;
        let n = spec.n();
        if let Some(c) = pool.iter().find(|c| c.gradient.len() != n) {
            return Err(ConvexError::DimensionMismatch(format!(
                "pool cut has {} coefficients, stage decisions have {n}",
                c.gradient.len()
            )));
        }
        let d = spec.lagrangian_grad_y(r.primal, x_n, r.lambda, r.mu);
        let (g, h) = spec.y_set.inequalities();
        let (theta_m, eta_m) = if pool.is_empty() {
            (spec.lagrangian(r.primal, x_n, r.lambda, r.mu), ell_over(&g, &h, &d, r.primal)?)
        } else {
            let epi = pool.iter().map(|c| c.value(r.primal)).fold(f64::NEG_INFINITY, f64::max);
            let rows = g.nrows() + pool.len();
            let mut ge = DMatrix::zeros(rows, n + 1);
            let mut he = DVector::zeros(rows);
            ge.view_mut((0, 0), (g.nrows(), n)).copy_from(&g);
            he.rows_mut(0, g.nrows()).copy_from(&h);
            for (k, c) in pool.iter().enumerate() {
                let row = g.nrows() + k;
                for j in 0..n {
                    ge[(row, j)] = c.gradient[j];
                }
                ge[(row, n)] = -1.0;
                he[row] = -c.intercept;
            }
            let de = d.clone().insert_row(n, 1.0);
            let ue = r.primal.clone().insert_row(n, epi);
            (spec.lagrangian(r.primal, x_n, r.lambda, r.mu) + epi, ell_over(&ge, &he, &de, &ue)?)
        };
        let beta_m = spec.lagrangian_grad_x(r.primal, x_n, r.lambda, r.mu);
        theta += r.probability * theta_m;
        eta += r.probability * eta_m;
        beta += &beta_m * r.probability;
        parts.push(RealizationCoefficients { theta: theta_m, eta: eta_m, beta: beta_m });
    }
    Ok(NlpStageCut { theta, eta, beta, x_trial: x_n.clone(), epsilon, realizations: parts })
}

/// ε-optimal primal and dual points for one problem instance.
#[derive(Debug, Clone, PartialEq)]
pub struct EpsilonSolution {
    pub primal: DVector<f64>,
    pub lambda: DVector<f64>,
    pub mu: DVector<f64>,
}

/// Produces ε-optimal primal and dual points of `Q(x)`.
pub trait EpsilonSolver {
    fn solve(&self, spec: &ConvexValueFunctionSpec, x: &DVector<f64>, epsilon: f64) -> Result<EpsilonSolution, ConvexError>;
}

/// `η^k = ℓ(ŷ^k, x^k, λ^k, μ^k)` for the k-th problem solved to accuracy
/// `ε^k`.
pub fn vanishing_eta_trace(
    problems: &[(&ConvexValueFunctionSpec, DVector<f64>)],
    epsilons: &[f64],
    solver: &dyn EpsilonSolver,
) -> Result<Vec<f64>, ConvexError> {
    if problems.len() != epsilons.len() {
        return Err(ConvexError::DimensionMismatch(format!(
            "{} problems but {} accuracies",
            problems.len(),
            epsilons.len()
        )));
    }
    problems
        .iter()
        .zip(epsilons)
        .map(|((spec, x), &eps)| {
            let s = solver.solve(spec, x, eps)?;
            Ok(build_inexact_cut(spec, x, &s.primal, &s.lambda, &s.mu, eps)?.ell_value)
        })
        .collect()
}

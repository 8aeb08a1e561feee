//! Documented convex test problems and their end-to-end check.
//!
//! A fixture is a JSON document describing one value function together with
//! a trial point `x̄`, the accuracies to test, a Slater point and the
//! constants the bounds need. Omitted polynomial coefficients are zero.
//!
//! ```json
//! {
//!   "name": "square-coupling",
//!   "n": 1, "m": 1,
//!   "objective": { "quad_yy": [[2.0]] },
//!   "constraints": [{ "linear_y": [-1.0], "linear_x": [1.0] }],
//!   "y_box": { "lower": [-2.0], "upper": [2.0] },
//!   "x_box": { "lower": [-2.0], "upper": [2.0] },
//!   "x_bar": [1.0],
//!   "epsilons": [0.0, 0.01, 0.1],
//!   "slater": { "point": [1.5], "kappa": 0.5, "radius": 0.25 },
//!   "constants": { "m1": 2.0, "m2": 0.0, "lipschitz_objective": 4.0,
//!                  "lipschitz_constraints": 1.0, "lower_bound": 0.0 },
//!   "dual_radius": 16.0
//! }
//! ```
//!
//! Equalities go in an optional `"equalities": {"a", "b", "rhs"}` block and
//! `"solver"` selects how ε-optimal points are produced (`{"kind":
//! "perturbed"}` by default, or `{"kind": "grid", "primal_scale",
//! "dual_scale"}`). `"kappa": null` stands for a problem without inequality
//! constraints.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::oracle::{self, GridEpsilonSolver, PerturbedSolver};
use super::{
    build_inexact_cut, compute_rho_star, dual_norm_bound, refine_gap_bound, ConvexError, ConvexValueFunctionSpec,
    DualNormBoundInputs, EpsilonSolver, GroundSet, Polynomial, SlaterValues,
};

/// Slack allowed when comparing a cut with the lower reference value.
pub const VALIDITY_TOL: f64 = 1e-6;
/// Slack on the distance bounds at `x̄`.
pub const GAP_TOL: f64 = 1e-7;

const BUILTIN: [(&str, &str); 10] = [
    ("square-coupling", include_str!("../../fixtures/square-coupling.json")),
    ("vanishing-half-square", include_str!("../../fixtures/vanishing-half-square.json")),
    ("shifted-interval", include_str!("../../fixtures/shifted-interval.json")),
    ("split-sum", include_str!("../../fixtures/split-sum.json")),
    ("line-in-disk", include_str!("../../fixtures/line-in-disk.json")),
    ("quartic-halfline", include_str!("../../fixtures/quartic-halfline.json")),
    ("coupled-quadratic", include_str!("../../fixtures/coupled-quadratic.json")),
    ("two-sided", include_str!("../../fixtures/two-sided.json")),
    ("box-active-sum", include_str!("../../fixtures/box-active-sum.json")),
    ("quartic-disk", include_str!("../../fixtures/quartic-disk.json")),
];

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolynomialDoc {
    #[serde(default)]
    pub constant: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub linear_y: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub linear_x: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quad_yy: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quad_yx: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quad_xx: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quartic_y: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EqualitiesDoc {
    pub a: Vec<Vec<f64>>,
    pub b: Vec<Vec<f64>>,
    pub rhs: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxDoc {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SlaterDoc {
    pub point: Vec<f64>,
    pub kappa: Option<f64>,
    pub radius: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstantsDoc {
    pub m1: f64,
    pub m2: f64,
    pub lipschitz_objective: f64,
    pub lipschitz_constraints: f64,
    pub lower_bound: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SolverDoc {
    #[default]
    Perturbed,
    Grid {
        primal_scale: f64,
        dual_scale: f64,
    },
}

/// On-disk form of a fixture.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixtureDoc {
    pub name: String,
    #[serde(default)]
    pub description: String,
    /// How the constants were obtained.
    #[serde(default)]
    pub notes: Vec<String>,
    pub n: usize,
    pub m: usize,
    pub objective: PolynomialDoc,
    #[serde(default)]
    pub constraints: Vec<PolynomialDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub equalities: Option<EqualitiesDoc>,
    pub y_box: BoxDoc,
    pub x_box: BoxDoc,
    pub x_bar: Vec<f64>,
    pub epsilons: Vec<f64>,
    pub slater: SlaterDoc,
    pub constants: ConstantsDoc,
    pub dual_radius: f64,
    #[serde(default)]
    pub solver: SolverDoc,
}

/// A parsed fixture.
#[derive(Debug, Clone, PartialEq)]
pub struct Fixture {
    pub name: String,
    pub description: String,
    pub spec: ConvexValueFunctionSpec,
    pub x_bar: DVector<f64>,
    pub epsilons: Vec<f64>,
    pub slater_point: DVector<f64>,
    /// `+∞` without inequality constraints.
    pub kappa: f64,
    pub radius: f64,
    pub m1: f64,
    pub m2: f64,
    pub lipschitz_objective: f64,
    pub lipschitz_constraints: f64,
    pub lower_bound: f64,
    /// Multipliers are searched in `[−R, R]^q × [0, R]^p`.
    pub dual_radius: f64,
    pub solver: SolverDoc,
}

fn matrix(name: &str, rows: &Option<Vec<Vec<f64>>>, nr: usize, nc: usize) -> Result<DMatrix<f64>, ConvexError> {
    match rows {
        None => Ok(DMatrix::zeros(nr, nc)),
        Some(r) => dense(name, r, nr, nc),
    }
}

fn dense(name: &str, rows: &[Vec<f64>], nr: usize, nc: usize) -> Result<DMatrix<f64>, ConvexError> {
    if rows.len() != nr || rows.iter().any(|r| r.len() != nc) {
        return Err(ConvexError::DimensionMismatch(format!("{name} must be {nr}×{nc}")));
    }
    Ok(DMatrix::from_fn(nr, nc, |i, j| rows[i][j]))
}

fn vector(name: &str, v: &Option<Vec<f64>>, len: usize) -> Result<DVector<f64>, ConvexError> {
    match v {
        None => Ok(DVector::zeros(len)),
        Some(v) if v.len() == len => Ok(DVector::from_column_slice(v)),
        Some(v) => Err(ConvexError::DimensionMismatch(format!("{name} has {} entries, expected {len}", v.len()))),
    }
}

impl PolynomialDoc {
    fn build(&self, n: usize, m: usize) -> Result<Polynomial, ConvexError> {
        Ok(Polynomial {
            constant: self.constant,
            linear_y: vector("linear_y", &self.linear_y, n)?,
            linear_x: vector("linear_x", &self.linear_x, m)?,
            quad_yy: matrix("quad_yy", &self.quad_yy, n, n)?,
            quad_yx: matrix("quad_yx", &self.quad_yx, n, m)?,
            quad_xx: matrix("quad_xx", &self.quad_xx, m, m)?,
            quartic_y: vector("quartic_y", &self.quartic_y, n)?,
        })
    }
}

impl FixtureDoc {
    pub fn build(&self) -> Result<Fixture, ConvexError> {
        let wrap = |e: ConvexError| ConvexError::Fixture { name: self.name.clone(), message: e.to_string() };
        self.build_inner().map_err(wrap)
    }

    fn build_inner(&self) -> Result<Fixture, ConvexError> {
        let (n, m) = (self.n, self.m);
        let objective = self.objective.build(n, m)?;
        let constraints = self.constraints.iter().map(|g| g.build(n, m)).collect::<Result<Vec<_>, _>>()?;
        let (a, b_mat, rhs) = match &self.equalities {
            None => (DMatrix::zeros(0, n), DMatrix::zeros(0, m), DVector::zeros(0)),
            Some(e) => {
                let q = e.rhs.len();
                (dense("a", &e.a, q, n)?, dense("b", &e.b, q, m)?, DVector::from_column_slice(&e.rhs))
            }
        };
        let y_set = GroundSet::Box {
            lower: vector("y_box.lower", &Some(self.y_box.lower.clone()), n)?,
            upper: vector("y_box.upper", &Some(self.y_box.upper.clone()), n)?,
        };
        let spec = ConvexValueFunctionSpec {
            objective,
            constraints,
            a,
            b_mat,
            rhs,
            y_set,
            x_lower: vector("x_box.lower", &Some(self.x_box.lower.clone()), m)?,
            x_upper: vector("x_box.upper", &Some(self.x_box.upper.clone()), m)?,
        };
        spec.validate()?;
        let kappa = match (self.slater.kappa, spec.p()) {
            (None, 0) => f64::INFINITY,
            (Some(k), p) if p > 0 && k > 0.0 => k,
            _ => return Err(ConvexError::InvalidInput("kappa must be positive, and null exactly when p = 0".into())),
        };
        if self.epsilons.iter().any(|e| !(*e >= 0.0)) {
            return Err(ConvexError::InvalidInput("epsilons must be nonnegative".into()));
        }
        Ok(Fixture {
            name: self.name.clone(),
            description: self.description.clone(),
            x_bar: vector("x_bar", &Some(self.x_bar.clone()), m)?,
            epsilons: self.epsilons.clone(),
            slater_point: vector("slater.point", &Some(self.slater.point.clone()), n)?,
            kappa,
            radius: self.slater.radius,
            m1: self.constants.m1,
            m2: self.constants.m2,
            lipschitz_objective: self.constants.lipschitz_objective,
            lipschitz_constraints: self.constants.lipschitz_constraints,
            lower_bound: self.constants.lower_bound,
            dual_radius: self.dual_radius,
            solver: self.solver,
            spec,
        })
    }
}

pub fn parse_fixture(text: &str) -> Result<Fixture, ConvexError> {
    let doc: FixtureDoc = serde_json::from_str(text)?;
    doc.build()
}

pub fn load_fixture(path: &Path) -> Result<Fixture, ConvexError> {
    parse_fixture(&std::fs::read_to_string(path)?)
}

/// The ten fixtures shipped with the crate.
pub fn builtin_fixtures() -> Result<Vec<Fixture>, ConvexError> {
    BUILTIN.iter().map(|(_, text)| parse_fixture(text)).collect()
}

pub fn builtin_fixture(name: &str) -> Result<Fixture, ConvexError> {
    let (_, text) = BUILTIN
        .iter()
        .find(|(n, _)| *n == name)
        .ok_or_else(|| ConvexError::InvalidInput(format!("no built-in fixture named {name}")))?;
    parse_fixture(text)
}

impl Fixture {
    pub fn epsilon_solver(&self) -> Box<dyn EpsilonSolver> {
        match self.solver {
            SolverDoc::Perturbed => {
                Box::new(PerturbedSolver { dual_radius: self.dual_radius, slater_point: self.slater_point.clone() })
            }
            SolverDoc::Grid { primal_scale, dual_scale } => {
                Box::new(GridEpsilonSolver { primal_scale, dual_scale, dual_radius: self.dual_radius })
            }
        }
    }

    /// `ρ_*` for the box ground set, whose direction space is all of `ℝⁿ`.
    pub fn rho_star(&self) -> Result<f64, ConvexError> {
        let a = &self.spec.a;
        if a.nrows() == 0 || a.amax() == 0.0 {
            return Ok(1.0);
        }
        compute_rho_star(a, &DMatrix::identity(self.spec.n(), self.spec.n()), self.radius)
    }

    pub fn dual_norm_bound(&self, epsilon: f64) -> Result<f64, ConvexError> {
        dual_norm_bound(&DualNormBoundInputs {
            objective_at_slater: self.spec.objective_value(&self.slater_point, &self.x_bar),
            lower_bound: self.lower_bound,
            epsilon,
            lipschitz_objective: self.lipschitz_objective,
            lipschitz_constraints: self.lipschitz_constraints,
            radius: self.radius,
            kappa: self.kappa,
            rho_star: self.rho_star()?,
        })
    }

    /// Grid over `X` with the given step (one-dimensional `X` only).
    pub fn x_grid(&self, step: f64) -> Result<Vec<DVector<f64>>, ConvexError> {
        if self.spec.m() != 1 {
            return Err(ConvexError::Unsupported("grids over X need a one-dimensional state".into()));
        }
        let (lo, hi) = (self.spec.x_lower[0], self.spec.x_upper[0]);
        let count = ((hi - lo) / step + 1e-9).floor() as usize + 1;
        Ok((0..count).map(|i| DVector::from_element(1, (lo + i as f64 * step).min(hi))).collect())
    }
}

/// Checks of one certificate at one accuracy.
#[derive(Debug, Clone, PartialEq)]
pub struct CutCheck {
    pub epsilon: f64,
    pub ell: f64,
    /// Reference `Q(x̄)`.
    pub q_value: f64,
    pub cut_value: f64,
    /// `Q(x̄) − C(x̄)`.
    pub measured_gap: f64,
    pub crude_bound: f64,
    pub refined_bound: f64,
    /// `max_x C(x) − Q(x)` over the grid.
    pub max_violation: f64,
    /// `f(ŷ) − Q(x̄)` and `Q(x̄) − θ(λ̂, μ̂)`.
    pub primal_gap: f64,
    pub dual_gap: f64,
}

impl CutCheck {
    pub fn valid(&self) -> bool {
        self.max_violation <= VALIDITY_TOL
    }

    pub fn gap_within_bound(&self) -> bool {
        self.measured_gap <= self.crude_bound + GAP_TOL
    }

    pub fn refinement_ordered(&self) -> bool {
        self.refined_bound <= self.crude_bound + 1e-15 && self.refined_bound >= self.measured_gap - GAP_TOL
    }

    /// The generated points really are ε-optimal.
    pub fn inputs_ok(&self) -> bool {
        self.primal_gap <= self.epsilon + GAP_TOL && self.dual_gap <= self.epsilon + GAP_TOL
    }
}

/// ε-optimal multipliers found by enumeration and their largest norm.
#[derive(Debug, Clone, PartialEq)]
pub struct DualCheck {
    pub epsilon: f64,
    pub bound: f64,
    pub points_found: usize,
    pub max_norm: f64,
}

impl DualCheck {
    pub fn passed(&self) -> bool {
        self.points_found > 0 && self.max_norm <= self.bound
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FixtureReport {
    pub name: String,
    pub grid_points: usize,
    pub cuts: Vec<CutCheck>,
    pub duals: Vec<DualCheck>,
    /// Largest `upper − lower` between the two reference routes at the
    /// sampled states, and whether `lower ≤ upper` held everywhere.
    pub route_spread: f64,
    pub routes_ordered: bool,
    /// Problems found with the documented constants.
    pub constant_issues: Vec<String>,
}

impl FixtureReport {
    pub fn cuts_valid(&self) -> bool {
        self.cuts.iter().all(CutCheck::valid)
    }

    pub fn gaps_bounded(&self) -> bool {
        self.cuts.iter().all(CutCheck::gap_within_bound)
    }

    pub fn refinement_ordered(&self) -> bool {
        self.cuts.iter().all(CutCheck::refinement_ordered)
    }

    pub fn inputs_ok(&self) -> bool {
        self.cuts.iter().all(CutCheck::inputs_ok)
    }

    pub fn duals_bounded(&self) -> bool {
        !self.duals.is_empty() && self.duals.iter().all(DualCheck::passed)
    }

    pub fn references_agree(&self) -> bool {
        self.routes_ordered && self.route_spread <= ROUTE_SPREAD_TOL
    }

    pub fn passed(&self) -> bool {
        self.constant_issues.is_empty()
            && self.references_agree()
            && self.inputs_ok()
            && self.cuts_valid()
            && self.gaps_bounded()
            && self.refinement_ordered()
            && self.duals_bounded()
    }
}

/// Resolution of the checks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerifyOptions {
    pub x_step: f64,
    /// Points per multiplier coordinate in the dual enumeration.
    pub dual_points: usize,
    /// Step of the primal enumeration used as the upper reference route.
    pub primal_step: f64,
    /// Every how many grid states the two reference routes are compared.
    pub route_stride: usize,
    pub samples: usize,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions { x_step: 1e-3, dual_points: 101, primal_step: 1e-4, route_stride: 50, samples: 2000 }
    }
}

const ROUTE_SPREAD_TOL: f64 = 5e-3;

fn fixture_error(fx: &Fixture, message: impl Into<String>) -> ConvexError {
    ConvexError::Fixture { name: fx.name.clone(), message: message.into() }
}

/// Runs every check on `fx`.
pub fn verify_fixture(fx: &Fixture, opts: &VerifyOptions) -> Result<FixtureReport, ConvexError> {
    let spec = &fx.spec;
    let grid = fx.x_grid(opts.x_step)?;
    let mut q_grid = Vec::with_capacity(grid.len());
    let mut max_multiplier: f64 = 0.0;
    for x in &grid {
        let v = oracle::value_function(spec, x, fx.dual_radius)?
            .ok_or_else(|| fixture_error(fx, format!("state {} admits no feasible point", x[0])))?;
        max_multiplier = max_multiplier.max(v.mu.amax());
        q_grid.push(v.value);
    }

    let mut route_spread: f64 = 0.0;
    let mut routes_ordered = true;
    for (x, &lower) in grid.iter().zip(&q_grid).step_by(opts.route_stride.max(1)) {
        let Some((upper, _)) = oracle::primal_grid_value(spec, x, opts.primal_step)? else {
            routes_ordered = false;
            continue;
        };
        routes_ordered &= lower <= upper + 1e-9;
        route_spread = route_spread.max(upper - lower);
    }

    let q_bar = oracle::value_function(spec, &fx.x_bar, fx.dual_radius)?
        .ok_or_else(|| fixture_error(fx, "x̄ admits no feasible point"))?
        .value;
    let mut constant_issues = check_constants(fx, q_bar, opts.samples);
    if max_multiplier >= fx.dual_radius * (1.0 - 1e-6) {
        constant_issues.push(format!("multipliers reach the search radius {}", fx.dual_radius));
    }

    let solver = fx.epsilon_solver();
    let slater = SlaterValues::at(spec, &fx.slater_point, &fx.x_bar);
    let diameter = spec.y_set.diameter_bound()?;
    let mut cuts = Vec::with_capacity(fx.epsilons.len());
    for &eps in &fx.epsilons {
        let sol = solver.solve(spec, &fx.x_bar, eps)?;
        let mut cert = build_inexact_cut(spec, &fx.x_bar, &sol.primal, &sol.lambda, &sol.mu, eps)?;
        let refinement = refine_gap_bound(&cert, fx.m1, fx.m2, diameter, fx.lower_bound, &slater)?;
        let refined_bound = refinement.bound;
        cert.refinement = Some(refinement);
        let max_violation =
            grid.iter().zip(&q_grid).map(|(x, q)| cert.value(x) - q).fold(f64::NEG_INFINITY, f64::max);
        let cut_value = cert.value(&fx.x_bar);
        let theta = oracle::dual_function(spec, &fx.x_bar, &sol.lambda, &sol.mu)?.0;
        cuts.push(CutCheck {
            epsilon: eps,
            ell: cert.ell_value,
            q_value: q_bar,
            cut_value,
            measured_gap: q_bar - cut_value,
            crude_bound: cert.bound,
            refined_bound,
            max_violation,
            primal_gap: spec.objective_value(&sol.primal, &fx.x_bar) - q_bar,
            dual_gap: q_bar - theta,
        });
    }

    let duals = check_dual_norms(fx, q_bar, opts.dual_points)?;
    Ok(FixtureReport {
        name: fx.name.clone(),
        grid_points: grid.len(),
        cuts,
        duals,
        route_spread,
        routes_ordered,
        constant_issues,
    })
}

/// Enumerates multipliers on a coarse grid over the whole search box and a
/// fine grid around the dual optimum, keeps those within ε of `Q(x̄)`, and
/// compares their largest norm with the bound. Only positive accuracies are
/// checked.
fn check_dual_norms(fx: &Fixture, q_bar: f64, points: usize) -> Result<Vec<DualCheck>, ConvexError> {
    let spec = &fx.spec;
    let (q, p) = (spec.q(), spec.p());
    let d = q + p;
    let r = fx.dual_radius;
    let mut lo: Vec<f64> = std::iter::repeat_n(-r, q).chain(std::iter::repeat_n(0.0, p)).collect();
    let mut hi = vec![r; d];
    let points = points.max(2);
    let mut samples: Vec<(f64, f64)> = Vec::new();
    let center = oracle::dual_optimum(spec, &fx.x_bar, r)?;
    let z_star: Vec<f64> = center.lambda.iter().chain(center.mu.iter()).copied().collect();
    for pass in 0..2 {
        if pass == 1 {
            let half = 2.0 * (2.0 * r) / (points - 1) as f64;
            for j in 0..d {
                let floor = if j < q { f64::NEG_INFINITY } else { 0.0 };
                lo[j] = (z_star[j] - half).max(floor);
                hi[j] = z_star[j] + half;
            }
        }
        let mut idx = vec![0usize; d];
        loop {
            let z: Vec<f64> =
                (0..d).map(|j| lo[j] + (hi[j] - lo[j]) * idx[j] as f64 / (points - 1) as f64).collect();
            let (lambda, mu) = (DVector::from_column_slice(&z[..q]), DVector::from_column_slice(&z[q..]));
            let theta = oracle::dual_function(spec, &fx.x_bar, &lambda, &mu)?.0;
            let norm = z.iter().map(|v| v * v).sum::<f64>().sqrt();
            samples.push((theta, norm));
            let mut j = 0;
            while j < d {
                idx[j] += 1;
                if idx[j] < points {
                    break;
                }
                idx[j] = 0;
                j += 1;
            }
            if j == d {
                break;
            }
        }
    }
    let solver = fx.epsilon_solver();
    fx.epsilons
        .iter()
        .filter(|e| **e > 0.0)
        .map(|&eps| {
            let mut found: Vec<f64> = samples.iter().filter(|(t, _)| *t >= q_bar - eps).map(|(_, n)| *n).collect();
            let sol = solver.solve(spec, &fx.x_bar, eps)?;
            let theta = oracle::dual_function(spec, &fx.x_bar, &sol.lambda, &sol.mu)?.0;
            if theta >= q_bar - eps {
                found.push((sol.lambda.norm_squared() + sol.mu.norm_squared()).sqrt());
            }
            Ok(DualCheck {
                epsilon: eps,
                bound: fx.dual_norm_bound(eps)?,
                points_found: found.len(),
                max_norm: found.iter().copied().fold(0.0, f64::max),
            })
        })
        .collect()
}

/// Sampling checks of the documented constants; each returned string names
/// one failed check.
pub fn check_constants(fx: &Fixture, q_bar: f64, samples: usize) -> Vec<String> {
    let spec = &fx.spec;
    let mut issues = Vec::new();
    let (n, m) = (spec.n(), spec.m());
    let GroundSet::Box { lower: ylo, upper: yhi } = &spec.y_set else {
        return vec!["fixtures use box ground sets".into()];
    };
    let y0 = &fx.slater_point;
    let xb = &fx.x_bar;
    if (0..m).any(|j| xb[j] < spec.x_lower[j] || xb[j] > spec.x_upper[j]) {
        issues.push("x̄ lies outside X".into());
    }
    if (0..n).any(|i| y0[i] - fx.radius < ylo[i] || y0[i] + fx.radius > yhi[i]) {
        issues.push(format!("ball of radius {} around the Slater point leaves Y", fx.radius));
    }
    if spec.equality_residual(y0, xb).amax() > 1e-9 {
        issues.push("Slater point violates the equalities at x̄".into());
    }
    let g0 = spec.constraint_values(y0, xb);
    if let Some(v) = g0.iter().find(|&&v| v > -fx.kappa) {
        issues.push(format!("constraint value {v} at the Slater point exceeds −κ"));
    }
    if spec.p() > 0 && fx.radius > fx.kappa / (2.0 * fx.lipschitz_constraints) {
        issues.push("radius exceeds κ / (2 L(g))".into());
    }
    if fx.lower_bound > q_bar + 1e-9 {
        issues.push(format!("lower bound {} exceeds Q(x̄) = {q_bar}", fx.lower_bound));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(0xf1c5);
    let draw_y = |rng: &mut ChaCha8Rng| DVector::from_fn(n, |i, _| rng.random_range(ylo[i]..=yhi[i]));
    let draw_x =
        |rng: &mut ChaCha8Rng| DVector::from_fn(m, |j, _| rng.random_range(spec.x_lower[j]..=spec.x_upper[j]));
    let slack = 1.0 + 1e-9;
    let mut worst = [0.0f64; 4];
    for _ in 0..samples {
        let (y1, y2, x) = (draw_y(&mut rng), draw_y(&mut rng), draw_x(&mut rng));
        let dy = (&y2 - &y1).norm();
        if dy > 1e-12 {
            let r1 = (spec.objective.grad_y(&y2, &x) - spec.objective.grad_y(&y1, &x)).norm() / dy;
            worst[0] = worst[0].max(r1);
            for g in &spec.constraints {
                worst[1] = worst[1].max((g.grad_y(&y2, &x) - g.grad_y(&y1, &x)).norm() / dy);
            }
        }
        worst[2] = worst[2].max(spec.objective.grad_y(&y1, xb).norm());
        for g in &spec.constraints {
            worst[3] = worst[3].max(g.grad_y(&y1, xb).norm());
        }
    }
    let documented = [fx.m1, fx.m2, fx.lipschitz_objective, fx.lipschitz_constraints];
    let names = ["M1", "M2", "L(f)", "L(g)"];
    for k in 0..4 {
        if worst[k] > documented[k] * slack + 1e-12 {
            issues.push(format!("{} = {} is below the sampled value {}", names[k], documented[k], worst[k]));
        }
    }
    issues
}

//! Deterministic search routines for small convex programs over boxes.
//!
//! Everything here assumes a box ground set and a handful of variables:
//! minimization is nested golden-section search, which is exact up to its
//! tolerance for convex functions of a few variables. Equality constraints
//! are eliminated by restricting `y` to the affine solution set.

use nalgebra::{DMatrix, DVector};

use super::{ConvexError, ConvexValueFunctionSpec, EpsilonSolution, EpsilonSolver, GroundSet};

const GOLDEN: f64 = 0.618_033_988_749_894_9;
const SEARCH_TOL: f64 = 1e-11;

/// Minimizes a convex function on `[lo, hi]`.
pub fn golden_minimize(f: &mut dyn FnMut(f64) -> f64, lo: f64, hi: f64) -> (f64, f64) {
    if hi - lo <= 0.0 {
        return (lo, f(lo));
    }
    let tol = SEARCH_TOL * (1.0 + (hi - lo));
    let (mut a, mut b) = (lo, hi);
    let mut c = b - GOLDEN * (b - a);
    let mut d = a + GOLDEN * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > tol {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - GOLDEN * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + GOLDEN * (b - a);
            fd = f(d);
        }
    }
    // The endpoints are candidates too: minima on the boundary are common.
    let mut best = if fc <= fd { (c, fc) } else { (d, fd) };
    for e in [lo, hi] {
        let fe = f(e);
        if fe < best.1 {
            best = (e, fe);
        }
    }
    best
}

/// Minimizes a convex function over a box by nested golden-section search.
pub fn minimize_box(f: &dyn Fn(&[f64]) -> f64, lo: &[f64], hi: &[f64]) -> (Vec<f64>, f64) {
    let mut point = lo.to_vec();
    let v = nested(f, lo, hi, &mut point, 0);
    (point, v)
}

fn nested(f: &dyn Fn(&[f64]) -> f64, lo: &[f64], hi: &[f64], point: &mut Vec<f64>, k: usize) -> f64 {
    if k == lo.len() {
        return f(point);
    }
    let mut inner = |t: f64| {
        point[k] = t;
        nested(f, lo, hi, point, k + 1)
    };
    let (t, _) = golden_minimize(&mut inner, lo[k], hi[k]);
    point[k] = t;
    nested(f, lo, hi, point, k + 1)
}

fn box_of(spec: &ConvexValueFunctionSpec) -> Result<(&DVector<f64>, &DVector<f64>), ConvexError> {
    match &spec.y_set {
        GroundSet::Box { lower, upper } => Ok((lower, upper)),
        GroundSet::Polytope { .. } => Err(ConvexError::Unsupported("search oracles need a box ground set".into())),
    }
}

/// `θ_x(λ, μ) = min_{y ∈ Y} L_x(y, λ, μ)` and a minimizer.
pub fn dual_function(
    spec: &ConvexValueFunctionSpec,
    x: &DVector<f64>,
    lambda: &DVector<f64>,
    mu: &DVector<f64>,
) -> Result<(f64, DVector<f64>), ConvexError> {
    if mu.iter().any(|&v| v < 0.0) {
        return Err(ConvexError::InvalidInput("dual function needs μ ≥ 0".into()));
    }
    let (lo, hi) = box_of(spec)?;
    let xs = x.as_slice();
    let shift = lambda.dot(&(&spec.b_mat * x - &spec.rhs));
    let a_lambda = spec.a.tr_mul(lambda);
    let f = |y: &[f64]| {
        let mut v = spec.objective.value(y, xs) + shift;
        for (i, ai) in a_lambda.iter().enumerate() {
            v += ai * y[i];
        }
        for (g, m) in spec.constraints.iter().zip(mu.iter()) {
            if *m != 0.0 {
                v += m * g.value(y, xs);
            }
        }
        v
    };
    let (y, v) = minimize_box(&f, lo.as_slice(), hi.as_slice());
    Ok((v, DVector::from_vec(y)))
}

/// `{y : Ay + Bx = b} ∩ Y` written as `y = y_p + N w` with `w` in a box.
struct AffineSlice {
    particular: DVector<f64>,
    basis: DMatrix<f64>,
    w_lo: Vec<f64>,
    w_hi: Vec<f64>,
}

impl AffineSlice {
    fn new(spec: &ConvexValueFunctionSpec, x: &DVector<f64>) -> Result<Option<Self>, ConvexError> {
        let (lo, hi) = box_of(spec)?;
        let n = spec.n();
        let rhs = &spec.rhs - &spec.b_mat * x;
        let (particular, basis) = if spec.q() == 0 || spec.a.amax() == 0.0 {
            if rhs.amax() > 1e-9 {
                return Ok(None);
            }
            (DVector::zeros(n), DMatrix::identity(n, n))
        } else {
            let svd = spec.a.clone().svd(true, true);
            let smax = svd.singular_values.max();
            let rank = svd.singular_values.iter().filter(|&&s| s > 1e-10 * smax).count();
            let pinv = svd.pseudo_inverse(1e-10 * smax).map_err(|e| ConvexError::InvalidInput(e.to_string()))?;
            let yp = &pinv * &rhs;
            if (&spec.a * &yp - &rhs).amax() > 1e-9 * (1.0 + rhs.amax()) {
                return Ok(None);
            }
            // Right singular vectors beyond the rank span the null space;
            // complete to n vectors with a full SVD of the padded matrix.
            let mut padded = DMatrix::zeros(n.max(spec.q()), n);
            padded.view_mut((0, 0), (spec.q(), n)).copy_from(&spec.a);
            let full = padded.svd(false, true);
            let vt = full.v_t.expect("requested");
            let mut order: Vec<usize> = (0..full.singular_values.len()).collect();
            order.sort_by(|&i, &j| full.singular_values[j].total_cmp(&full.singular_values[i]));
            let null: Vec<DVector<f64>> = order[rank..].iter().map(|&i| vt.row(i).transpose()).collect();
            let basis = if null.is_empty() { DMatrix::zeros(n, 0) } else { DMatrix::from_columns(&null) };
            (yp, basis)
        };
        let k = basis.ncols();
        if k > 1 && k < n {
            return Err(ConvexError::Unsupported("affine slices of dimension above one inside a proper subspace".into()));
        }
        let (mut w_lo, mut w_hi) = (vec![f64::NEG_INFINITY; k], vec![f64::INFINITY; k]);
        if k == n {
            // Identity basis with zero particular part: the box itself.
            for i in 0..n {
                w_lo[i] = lo[i] - particular[i];
                w_hi[i] = hi[i] - particular[i];
            }
        } else if k == 1 {
            for i in 0..n {
                let c = basis[(i, 0)];
                if c.abs() <= 1e-14 {
                    if particular[i] < lo[i] - 1e-9 || particular[i] > hi[i] + 1e-9 {
                        return Ok(None);
                    }
                    continue;
                }
                let (a, b) = ((lo[i] - particular[i]) / c, (hi[i] - particular[i]) / c);
                w_lo[0] = w_lo[0].max(a.min(b));
                w_hi[0] = w_hi[0].min(a.max(b));
            }
            if w_lo[0] > w_hi[0] {
                return Ok(None);
            }
        } else if (0..n).any(|i| particular[i] < lo[i] - 1e-9 || particular[i] > hi[i] + 1e-9) {
            return Ok(None);
        }
        Ok(Some(AffineSlice { particular, basis, w_lo, w_hi }))
    }

    fn point(&self, w: &[f64]) -> DVector<f64> {
        let mut y = self.particular.clone();
        for (j, wj) in w.iter().enumerate() {
            y.axpy(*wj, &self.basis.column(j), 1.0);
        }
        y
    }
}

/// Reference value of `Q(x)` and a multiplier attaining it.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueEstimate {
    /// `max_μ min_{y} f + ⟨μ, g⟩` over the affine slice; a lower bound up to
    /// the search tolerance.
    pub value: f64,
    pub mu: DVector<f64>,
    pub y: DVector<f64>,
}

/// `Q(x)` through its dual over the affine slice, with multipliers searched
/// in `[0, radius]^p`. `None` when `x` admits no point of the slice.
pub fn value_function(
    spec: &ConvexValueFunctionSpec,
    x: &DVector<f64>,
    radius: f64,
) -> Result<Option<ValueEstimate>, ConvexError> {
    let Some(slice) = AffineSlice::new(spec, x)? else {
        return Ok(None);
    };
    let xs = x.as_slice();
    let inner = |mu: &[f64]| -> (f64, Vec<f64>) {
        let f = |w: &[f64]| {
            let y = slice.point(w);
            let ys = y.as_slice();
            let mut v = spec.objective.value(ys, xs);
            for (g, m) in spec.constraints.iter().zip(mu) {
                if *m != 0.0 {
                    v += m * g.value(ys, xs);
                }
            }
            v
        };
        let (w, v) = minimize_box(&f, &slice.w_lo, &slice.w_hi);
        (v, w)
    };
    let p = spec.p();
    let neg = |mu: &[f64]| -inner(mu).0;
    let (mu, _) = minimize_box(&neg, &vec![0.0; p], &vec![radius; p]);
    let (value, w) = inner(&mu);
    Ok(Some(ValueEstimate { value, mu: DVector::from_vec(mu), y: slice.point(&w) }))
}

/// Smallest objective over grid points of the affine slice that satisfy
/// `g ≤ 0` exactly; an upper bound on `Q(x)`.
pub fn primal_grid_value(spec: &ConvexValueFunctionSpec, x: &DVector<f64>, step: f64) -> Result<Option<(f64, DVector<f64>)>, ConvexError> {
    let Some(slice) = AffineSlice::new(spec, x)? else {
        return Ok(None);
    };
    let counts: Vec<usize> =
        slice.w_lo.iter().zip(&slice.w_hi).map(|(l, h)| ((h - l) / step).floor() as usize + 1).collect();
    let mut best: Option<(f64, DVector<f64>)> = None;
    let mut idx = vec![0usize; counts.len()];
    loop {
        let w: Vec<f64> = idx.iter().enumerate().map(|(j, &i)| slice.w_lo[j] + i as f64 * step).collect();
        let y = slice.point(&w);
        if spec.y_set.contains(&y, 0.0) && spec.constraint_values(&y, x).iter().all(|&v| v <= 0.0) {
            let v = spec.objective_value(&y, x);
            if best.as_ref().is_none_or(|b| v < b.0) {
                best = Some((v, y));
            }
        }
        let mut j = 0;
        loop {
            if j == idx.len() {
                return Ok(best);
            }
            idx[j] += 1;
            if idx[j] < counts[j] {
                break;
            }
            idx[j] = 0;
            j += 1;
        }
    }
}

/// Maximizer of `θ_x` over `[−radius, radius]^q × [0, radius]^p`.
#[derive(Debug, Clone, PartialEq)]
pub struct DualPoint {
    pub value: f64,
    pub lambda: DVector<f64>,
    pub mu: DVector<f64>,
    /// Minimizer of the Lagrangian at the maximizer.
    pub y: DVector<f64>,
}

pub fn dual_optimum(spec: &ConvexValueFunctionSpec, x: &DVector<f64>, radius: f64) -> Result<DualPoint, ConvexError> {
    let (q, p) = (spec.q(), spec.p());
    let split = |z: &[f64]| (DVector::from_column_slice(&z[..q]), DVector::from_column_slice(&z[q..]));
    let neg = |z: &[f64]| {
        let (l, m) = split(z);
        -dual_function(spec, x, &l, &m).map(|r| r.0).unwrap_or(f64::NEG_INFINITY)
    };
    let mut lo = vec![-radius; q];
    lo.extend(std::iter::repeat_n(0.0, p));
    let hi = vec![radius; q + p];
    let (z, _) = minimize_box(&neg, &lo, &hi);
    let (lambda, mu) = split(&z);
    let (value, y) = dual_function(spec, x, &lambda, &mu)?;
    Ok(DualPoint { value, lambda, mu, y })
}

/// Largest `t ∈ [0, 1]` with `ok(t)`, for a predicate true on an interval
/// starting at zero.
fn largest_step(ok: &dyn Fn(f64) -> bool) -> f64 {
    if ok(1.0) {
        return 1.0;
    }
    let (mut a, mut b) = (0.0, 1.0);
    for _ in 0..60 {
        let m = 0.5 * (a + b);
        if ok(m) {
            a = m;
        } else {
            b = m;
        }
    }
    a
}

fn exact_solution(spec: &ConvexValueFunctionSpec, x: &DVector<f64>, radius: f64) -> Result<EpsilonSolution, ConvexError> {
    let d = dual_optimum(spec, x, radius)?;
    Ok(EpsilonSolution { primal: d.y, lambda: d.lambda, mu: d.mu })
}

fn reference_value(spec: &ConvexValueFunctionSpec, x: &DVector<f64>, radius: f64) -> Result<f64, ConvexError> {
    value_function(spec, x, radius)?
        .map(|v| v.value)
        .ok_or_else(|| ConvexError::InvalidInput("x admits no feasible point".into()))
}

/// ε-optimal points by grid search with steps proportional to ε: the best
/// feasible point of the primal grid `lo + i·h` and the best multiplier of
/// the grid `j·h_d`, with `h = ε·primal_scale` and `h_d = ε·dual_scale`.
/// Steps are halved until both points are ε-optimal against the reference
/// value. Supports one decision, no equalities and at most one constraint.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridEpsilonSolver {
    pub primal_scale: f64,
    pub dual_scale: f64,
    pub dual_radius: f64,
}

impl EpsilonSolver for GridEpsilonSolver {
    fn solve(&self, spec: &ConvexValueFunctionSpec, x: &DVector<f64>, epsilon: f64) -> Result<EpsilonSolution, ConvexError> {
        if spec.n() != 1 || spec.q() != 0 || spec.p() > 1 {
            return Err(ConvexError::Unsupported("grid solver handles one decision and at most one constraint".into()));
        }
        if epsilon == 0.0 {
            return exact_solution(spec, x, self.dual_radius);
        }
        let (lo, hi) = box_of(spec)?;
        let (lo, hi) = (lo[0], hi[0]);
        let q_ref = reference_value(spec, x, self.dual_radius)?;
        let mu_star = value_function(spec, x, self.dual_radius)?.map(|v| v.mu).unwrap_or_else(|| DVector::zeros(spec.p()));
        let theta = |mu: f64| {
            let m = DVector::from_element(spec.p(), mu);
            dual_function(spec, x, &DVector::zeros(0), &m).map(|r| r.0)
        };
        let mut scale = 1.0;
        for _ in 0..40 {
            let h = epsilon * self.primal_scale * scale;
            let count = ((hi - lo) / h).floor() as usize + 1;
            let mut best: Option<(f64, f64)> = None;
            for i in 0..count {
                let y = DVector::from_element(1, lo + i as f64 * h);
                if spec.constraint_values(&y, x).iter().all(|&v| v <= 0.0) {
                    let v = spec.objective_value(&y, x);
                    if best.is_none_or(|b| v < b.1) {
                        best = Some((y[0], v));
                    }
                }
            }
            let mu = if spec.p() == 0 {
                None
            } else {
                // θ is concave, so the best grid multiplier neighbours the
                // continuous maximizer.
                let hd = epsilon * self.dual_scale * scale;
                let j = (mu_star[0] / hd).floor().max(0.0);
                let (m0, m1) = (j * hd, (j + 1.0) * hd);
                Some(if theta(m0)? >= theta(m1)? { m0 } else { m1 })
            };
            let dual_ok = match mu {
                None => true,
                Some(m) => theta(m)? >= q_ref - epsilon,
            };
            if let Some((y, v)) = best {
                if v <= q_ref + epsilon && dual_ok {
                    return Ok(EpsilonSolution {
                        primal: DVector::from_element(1, y),
                        lambda: DVector::zeros(0),
                        mu: DVector::from_iterator(spec.p(), mu),
                    });
                }
            }
            scale *= 0.5;
        }
        Err(ConvexError::InvalidInput("grid search did not reach the requested accuracy".into()))
    }
}

/// ε-optimal points obtained by moving away from an optimal pair until the
/// accuracy budget is used: the primal point slides toward a Slater point,
/// the multipliers move along the all-ones direction.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbedSolver {
    pub dual_radius: f64,
    pub slater_point: DVector<f64>,
}

impl EpsilonSolver for PerturbedSolver {
    fn solve(&self, spec: &ConvexValueFunctionSpec, x: &DVector<f64>, epsilon: f64) -> Result<EpsilonSolution, ConvexError> {
        let exact = dual_optimum(spec, x, self.dual_radius)?;
        if epsilon == 0.0 {
            return Ok(EpsilonSolution { primal: exact.y, lambda: exact.lambda, mu: exact.mu });
        }
        let q_ref = reference_value(spec, x, self.dual_radius)?;
        let ys = &self.slater_point;
        let y_at = |t: f64| &exact.y + (ys - &exact.y) * t;
        let t = largest_step(&|t| spec.objective_value(&y_at(t), x) <= q_ref + epsilon);
        let dim = spec.q() + spec.p();
        let dir = 1.0 / (dim.max(1) as f64).sqrt();
        let dual_at = |s: f64| {
            let shift = s * self.dual_radius * dir;
            (exact.lambda.add_scalar(shift), exact.mu.add_scalar(shift))
        };
        let s = largest_step(&|s| {
            let (l, m) = dual_at(s);
            dual_function(spec, x, &l, &m).map(|r| r.0 >= q_ref - epsilon).unwrap_or(false)
        });
        let (lambda, mu) = dual_at(s);
        Ok(EpsilonSolution { primal: y_at(t), lambda, mu })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn golden_finds_interior_and_boundary_minima() {
        let (x, v) = golden_minimize(&mut |t| (t - 0.3) * (t - 0.3), -1.0, 2.0);
        assert!((x - 0.3).abs() < 1e-8 && v < 1e-15);
        let (x, _) = golden_minimize(&mut |t| t, -1.0, 2.0);
        assert_eq!(x, -1.0);
    }

    #[test]
    fn nested_box_minimum() {
        let f = |y: &[f64]| (y[0] - 0.5).powi(2) + (y[1] + 0.25).powi(2) + y[0] * y[1];
        let (y, _) = minimize_box(&f, &[-1.0, -1.0], &[1.0, 1.0]);
        // Stationarity: 2(y0 − 0.5) + y1 = 0, 2(y1 + 0.25) + y0 = 0.
        assert!((2.0 * (y[0] - 0.5) + y[1]).abs() < 1e-7);
        assert!((2.0 * (y[1] + 0.25) + y[0]).abs() < 1e-7);
    }
}

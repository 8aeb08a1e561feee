//! Sampling-bisection route to `ρ_*`, kept apart from the SVD reduction.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// `ρ(z)` by bisection on `t`, with membership of `tz` in `A(B(0, r) ∩ V)`
/// decided through the minimum-norm preimage `c` of `z`. The preimage is
/// linear in `t`, so one solve per direction serves every bisection step.
pub fn rho_sampled(preimage: &DVector<f64>, r: f64) -> f64 {
    let member = |t: f64| (preimage * t).norm() <= r;
    let (mut lo, mut hi) = (0.0, 1.0);
    while member(hi) {
        hi *= 2.0;
    }
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if member(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

/// Orthonormal basis of the column space by modified Gram-Schmidt.
pub fn gram_schmidt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let mut cols: Vec<DVector<f64>> = Vec::new();
    for j in 0..m.ncols() {
        let mut c = m.column(j).into_owned();
        for q in &cols {
            let d = q.dot(&c);
            c.axpy(-d, q, 1.0);
        }
        let n = c.norm();
        if n > 1e-9 * (1.0 + m.column(j).norm()) {
            cols.push(c / n);
        }
    }
    DMatrix::from_columns(&cols)
}

/// Minimum of `ρ` over `samples` random unit directions of the range of
/// `AV`. With `U` an orthonormal range basis and `z = Uw`, the preimages
/// solve `Mc = w` for the full-row-rank `M = UᵀAV`, so the minimum-norm one
/// is `Mᵀ(MMᵀ)⁻¹w`.
pub fn sampled_rho_star(a: &DMatrix<f64>, basis: &DMatrix<f64>, r: f64, samples: usize, rng: &mut ChaCha8Rng) -> f64 {
    let av = a * basis;
    let range = gram_schmidt(&av);
    let m = range.tr_mul(&av);
    let gram = (&m * m.transpose()).cholesky().expect("M has full row rank");
    let normal = rand_distr::StandardNormal;
    let mut best = f64::INFINITY;
    for _ in 0..samples {
        let w = DVector::from_fn(range.ncols(), |_, _| rng.sample::<f64, _>(normal));
        let w = &w / w.norm();
        let preimage = m.tr_mul(&gram.solve(&w));
        best = best.min(rho_sampled(&preimage, r));
    }
    best
}

/// `(A, orthonormal basis of V, r)` with `A` of 1 to 3 rows, `n` in 2..=4.
pub fn random_triple(rng: &mut ChaCha8Rng) -> (DMatrix<f64>, DMatrix<f64>, f64) {
    let n = rng.random_range(2..=4);
    let k = rng.random_range(1..=n);
    let q = rng.random_range(1..=3);
    let a = DMatrix::from_fn(q, n, |_, _| rng.random_range(-1.0..1.0));
    let raw = DMatrix::from_fn(n, k, |_, _| rng.random_range(-1.0..1.0));
    let basis = gram_schmidt(&raw);
    (a, basis, rng.random_range(0.2..3.0))
}

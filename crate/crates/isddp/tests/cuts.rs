use isddp::cuts::{
    build_cut_from_duals, evaluate_pool, extend_stage_lp, read_cuts_csv, write_cuts_csv, Cut, CutPool, StageDual,
};
use isddp::lp::{self, LinearProgram, LpStatus};
use isddp::model::inventory_instance;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn cut(theta: f64, beta: &[f64]) -> Cut {
    Cut { intercept: theta, gradient: DVector::from_column_slice(beta), stage: 2, iteration: 1, achieved_eps: None }
}

fn pool_of(cuts: &[Cut]) -> CutPool {
    let mut pool = CutPool::with_initial(cuts[0].clone());
    for c in &cuts[1..] {
        pool.push(c.clone()).unwrap();
    }
    pool
}

#[test]
fn exact_duals_give_tight_cut_at_trial_point() {
    let model = inventory_instance(3, 2, 5);
    let fan = model.stage(3);
    let x = DVector::from_column_slice(&[0.3, 1.1]);
    let outs: Vec<_> = fan.realizations.iter().map(|r| lp::solve_exact(&r.subproblem(&x)).unwrap()).collect();
    let q: f64 =
        outs.iter().zip(&fan.realizations).map(|(o, r)| r.probability * o.primal_objective.unwrap()).sum();
    let duals: Vec<StageDual> = outs
        .iter()
        .zip(&fan.realizations)
        .map(|(o, r)| StageDual { lambda: &o.dual.as_ref().unwrap().eq, realization: r, extra_intercept: 0.0 })
        .collect();
    let c = build_cut_from_duals(&duals, 3, 1, Some(0.0)).unwrap();
    assert!((c.value(&x) - q).abs() < 1e-10, "cut {} vs Q {q}", c.value(&x));
}

#[test]
fn one_pivot_duals_give_valid_cut_within_measured_gap() {
    let model = inventory_instance(3, 2, 5);
    let fan = model.stage(3);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..50 {
        let x = DVector::from_fn(2, |_, _| rng.random_range(0.0..2.0));
        let mut q = 0.0;
        let mut eps = 0.0;
        let mut lambdas = Vec::new();
        for r in &fan.realizations {
            let sub = r.subproblem(&x);
            let exact = lp::solve_exact(&sub).unwrap().primal_objective.unwrap();
            let capped = lp::solve_dual_capped(&sub, 1).unwrap();
            let d = capped.dual.unwrap();
            q += r.probability * exact;
            eps += r.probability * (exact - d.objective);
            lambdas.push(d.eq);
        }
        let duals: Vec<StageDual> = lambdas
            .iter()
            .zip(&fan.realizations)
            .map(|(l, r)| StageDual { lambda: l, realization: r, extra_intercept: 0.0 })
            .collect();
        let c = build_cut_from_duals(&duals, 3, 1, Some(eps)).unwrap();
        assert!(c.value(&x) <= q + 1e-9);
        assert!(q - c.value(&x) <= eps + 1e-9);
        // Dual feasibility makes the cut a minorant everywhere.
        for _ in 0..20 {
            let z = DVector::from_fn(2, |_, _| rng.random_range(0.0..3.0));
            let qz: f64 = fan
                .realizations
                .iter()
                .map(|r| r.probability * lp::solve_exact(&r.subproblem(&z)).unwrap().primal_objective.unwrap())
                .sum();
            assert!(c.value(&z) <= qz + 1e-9);
        }
    }
}

#[test]
fn mismatched_duals_are_rejected() {
    let model = inventory_instance(2, 1, 0);
    let r = &model.stage(2).realizations[0];
    let lambda = DVector::zeros(3);
    let err = build_cut_from_duals(&[StageDual { lambda: &lambda, realization: r, extra_intercept: 0.0 }], 2, 1, None);
    assert!(err.is_err());
    assert!(build_cut_from_duals(&[], 2, 1, None).is_err());
}

#[test]
fn twenty_cut_pool_matches_naive_max() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let cuts: Vec<Cut> =
        (0..20).map(|_| cut(rng.random_range(-1.0..1.0), &[rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)])).collect();
    let pool = pool_of(&cuts);
    for _ in 0..100 {
        let x = DVector::from_fn(2, |_, _| rng.random_range(-3.0..3.0));
        let naive = cuts.iter().map(|c| c.intercept + c.gradient[0] * x[0] + c.gradient[1] * x[1]).fold(f64::MIN, f64::max);
        assert!((evaluate_pool(&pool, &x).unwrap() - naive).abs() < 1e-14);
    }
}

/// `min c·x : x + s = 2, (x, s) ≥ 0` with a cut pool on `(x, s)`.
fn interval_stage(c: f64) -> LinearProgram {
    LinearProgram::equality_form(
        DVector::from_column_slice(&[c, 0.0]),
        DMatrix::from_row_slice(1, 2, &[1.0, 1.0]),
        DVector::from_element(1, 2.0),
    )
    .unwrap()
}

fn grid_optimum(c: f64, pool: &CutPool) -> f64 {
    (0..=20_000)
        .map(|i| {
            let x = i as f64 * 1e-4;
            c * x + evaluate_pool(pool, &DVector::from_column_slice(&[x, 2.0 - x])).unwrap()
        })
        .fold(f64::INFINITY, f64::min)
}

#[test]
fn single_cut_epigraph_adds_the_minorant() {
    let pool = pool_of(&[cut(0.7, &[-0.25, 0.0])]);
    let out = lp::solve_exact(&extend_stage_lp(&interval_stage(0.1), &pool).unwrap()).unwrap();
    // min 0.1x + 0.7 − 0.25x over [0, 2] sits at x = 2.
    assert!((out.primal_objective.unwrap() - (0.7 - 0.3)).abs() < 1e-12);
}

#[test]
fn three_cut_epigraph_matches_grid_search() {
    let pool = pool_of(&[cut(0.0, &[-1.0, 0.0]), cut(-0.8, &[0.5, 0.0]), cut(-0.5, &[0.0, 0.1])]);
    for c in [-0.3, 0.0, 0.2, 0.7] {
        let out = lp::solve_exact(&extend_stage_lp(&interval_stage(c), &pool).unwrap()).unwrap();
        assert_eq!(out.status, LpStatus::Optimal);
        let grid = grid_optimum(c, &pool);
        assert!((out.primal_objective.unwrap() - grid).abs() < 1e-3, "c={c}: lp {:?} grid {grid}", out.primal_objective);
        assert!(out.primal_objective.unwrap() <= grid + 1e-12);
    }
}

#[test]
fn cut_row_duals_sum_to_one() {
    let pool = pool_of(&[cut(0.0, &[-1.0, 0.0]), cut(-0.8, &[0.5, 0.0]), cut(-0.5, &[0.0, 0.1])]);
    let out = lp::solve_exact(&extend_stage_lp(&interval_stage(0.2), &pool).unwrap()).unwrap();
    let mu = out.dual.unwrap().ineq;
    assert!((mu.sum() + 1.0).abs() < 1e-9, "μ = {mu}");
    assert!(mu.iter().all(|&m| m <= 1e-12));
}

#[test]
fn dominated_cut_leaves_optimum_unchanged() {
    let base = pool_of(&[cut(0.0, &[-1.0, 0.0]), cut(-0.8, &[0.5, 0.0])]);
    let mut more = base.clone();
    more.push(cut(-5.0, &[0.1, 0.0])).unwrap();
    let a = lp::solve_exact(&extend_stage_lp(&interval_stage(0.2), &base).unwrap()).unwrap();
    let b = lp::solve_exact(&extend_stage_lp(&interval_stage(0.2), &more).unwrap()).unwrap();
    assert!((a.primal_objective.unwrap() - b.primal_objective.unwrap()).abs() < 1e-12);
}

#[test]
fn pool_rejects_wrong_dimension() {
    let mut pool = CutPool::with_lower_bound(3, 2, 0.0);
    assert!(pool.push(cut(1.0, &[1.0])).is_err());
    assert!(extend_stage_lp(&interval_stage(0.0), &CutPool::with_lower_bound(2, 3, 0.0)).is_err());
}

#[test]
fn dump_keeps_unknown_errors_and_several_stages() {
    let mut a = CutPool::with_lower_bound(2, 2, -1.0);
    a.push(Cut { achieved_eps: Some(0.25), ..cut(0.5, &[0.1, -0.2]) }).unwrap();
    let b = CutPool::with_lower_bound(3, 1, -0.5);
    let mut buf = Vec::new();
    write_cuts_csv(&[a.clone(), b.clone()], &mut buf).unwrap();
    let back = read_cuts_csv(&buf[..], |s| match s {
        2 => Some(2),
        3 => Some(1),
        _ => None,
    })
    .unwrap();
    let expected: Vec<Cut> = a.cuts().iter().chain(b.cuts()).cloned().collect();
    assert_eq!(back, expected);
    assert!(read_cuts_csv(&buf[..], |_| None).is_err());
}

proptest! {
    #[test]
    fn pool_value_nondecreasing_as_cuts_append(seed in 0u64..1_000_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let xs: Vec<DVector<f64>> = (0..10).map(|_| DVector::from_fn(2, |_, _| rng.random_range(-5.0..5.0))).collect();
        let mut pool = CutPool::with_lower_bound(2, 2, rng.random_range(-3.0..0.0));
        let mut prev: Vec<f64> = xs.iter().map(|x| evaluate_pool(&pool, x).unwrap()).collect();
        for _ in 0..15 {
            pool.push(cut(rng.random_range(-2.0..2.0), &[rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)])).unwrap();
            for (x, p) in xs.iter().zip(prev.iter_mut()) {
                let v = evaluate_pool(&pool, x).unwrap();
                prop_assert!(v >= *p);
                *p = v;
            }
        }
    }
}

use isddp::lp::{self, LpStatus};
use isddp::model::{
    build_extensive_form, check_recourse, inventory_instance, load_model, sample_reachable_states, save_model,
    tail_value, MultistageModel, StageFan, StageRealization, DEFAULT_TREE_LIMIT,
};
use isddp::portfolio::{generate_instance, PortfolioConfig};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

/// Stage variables `(s_t, u_t)`: stock and order, `s_t = s_{t−1} + u_t − d`.
fn stock(d: f64, hold: f64, order: f64, p: f64) -> StageRealization {
    StageRealization {
        a: DMatrix::from_row_slice(1, 2, &[1.0, -1.0]),
        b_mat: DMatrix::from_row_slice(1, 2, &[-1.0, 0.0]),
        rhs: DVector::from_element(1, -d),
        cost: DVector::from_column_slice(&[hold, order]),
        probability: p,
    }
}

fn toy_stock_model() -> MultistageModel {
    let stages = vec![
        StageFan { stage_index: 1, realizations: vec![stock(0.4, 0.1, 1.0, 1.0)] },
        StageFan { stage_index: 2, realizations: vec![stock(1.2, 0.2, 2.5, 0.5), stock(0.6, 0.2, 1.5, 0.5)] },
        StageFan { stage_index: 3, realizations: vec![stock(0.9, 0.1, 3.0, 0.3), stock(1.5, 0.1, 2.0, 0.7)] },
    ];
    MultistageModel::new(stages, DVector::from_column_slice(&[0.5, 0.0])).unwrap()
}

/// Backward recursion over stock levels on a grid of step `h`. Every
/// breakpoint of the toy model is a multiple of `h`, so the recursion is
/// exact there.
fn grid_dp(model: &MultistageModel, h: f64, s_max: f64) -> f64 {
    let n = (s_max / h).round() as usize + 1;
    let level = |i: usize| i as f64 * h;
    let mut next = vec![0.0; n];
    for t in (2..=model.horizon).rev() {
        let mut cur = vec![0.0; n];
        for (ip, q) in cur.iter_mut().enumerate() {
            let s_prev = level(ip);
            for r in &model.stage(t).realizations {
                let d = -r.rhs[0];
                let best = (0..n)
                    .filter(|&i| level(i) + d >= s_prev - 1e-12)
                    .map(|i| r.cost[0] * level(i) + r.cost[1] * (level(i) - s_prev + d) + next[i])
                    .fold(f64::INFINITY, f64::min);
                *q += r.probability * best;
            }
        }
        next = cur;
    }
    let r = &model.stage(1).realizations[0];
    let s0 = model.initial_state[0];
    let d = -r.rhs[0];
    (0..n)
        .filter(|&i| level(i) + d >= s0 - 1e-12)
        .map(|i| r.cost[0] * level(i) + r.cost[1] * (level(i) - s0 + d) + next[i])
        .fold(f64::INFINITY, f64::min)
}

fn optimum(model: &MultistageModel) -> (LpStatus, Option<f64>) {
    let ef = build_extensive_form(model, DEFAULT_TREE_LIMIT).unwrap();
    let out = lp::solve_exact(&ef.lp).unwrap();
    (out.status, out.primal_objective)
}

#[test]
fn extensive_form_matches_grid_recursion() {
    let model = toy_stock_model();
    let (status, value) = optimum(&model);
    assert_eq!(status, LpStatus::Optimal);
    let dp = grid_dp(&model, 1e-3, 3.0);
    assert!((value.unwrap() - dp).abs() < 1e-9, "extensive form {value:?}, grid {dp}");
}

#[test]
fn extensive_form_nodes_are_depth_first() {
    let ef = build_extensive_form(&toy_stock_model(), DEFAULT_TREE_LIMIT).unwrap();
    let stages: Vec<usize> = ef.nodes.iter().map(|n| n.stage).collect();
    assert_eq!(stages, vec![1, 2, 3, 3, 2, 3, 3]);
    let total: f64 = ef.nodes.iter().filter(|n| n.stage == 3).map(|n| n.probability).sum();
    assert!((total - 1.0).abs() < 1e-12);
}

#[test]
fn infeasible_child_shows_in_extensive_form_and_recourse_check() {
    let mut model = toy_stock_model();
    // s_2 + s_1 = −1 has no solution with s ≥ 0.
    model.stages[1].realizations[1].b_mat = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
    model.stages[1].realizations[1].a = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
    model.stages[1].realizations[1].rhs = DVector::from_element(1, -1.0);
    assert_eq!(optimum(&model).0, LpStatus::Infeasible);
    let report = check_recourse(&model, 50, 3).unwrap();
    assert!(!report.violations.is_empty());
    assert!(report.violations.iter().all(|v| v.stage == 2 && v.realization == 1));
}

#[test]
fn trivially_feasible_model_has_clean_recourse_report() {
    let doc = r#"{"horizon": 2, "state_dims": [1, 1], "initial_state": [0.0],
        "stages": [
            {"realizations": [{"A": [[1.0]], "B": [[0.0]], "b": [1.0], "c": [1.0], "p": 1.0}]},
            {"realizations": [{"A": [[1.0]], "B": [[-1.0]], "b": [0.0], "c": [2.0], "p": 1.0}]}
        ]}"#;
    let model = load_model(doc).unwrap();
    let report = check_recourse(&model, 20, 0).unwrap();
    assert_eq!(report.samples, 20);
    assert!(report.violations.is_empty());
    assert_eq!(optimum(&model).1, Some(3.0));
}

#[test]
fn portfolio_instances_have_complete_recourse() {
    let model = generate_instance(&PortfolioConfig::new(10, 6, 4, 1));
    assert!(check_recourse(&model, 100, 17).unwrap().violations.is_empty());
}

#[test]
fn portfolio_round_trip_is_exact() {
    let model = generate_instance(&PortfolioConfig::new(5, 4, 3, 21));
    let back = load_model(&save_model(&model)).unwrap();
    assert_eq!(back, model);
}

#[test]
fn tail_value_agrees_with_full_tree_at_stage_one() {
    let model = toy_stock_model();
    let v = tail_value(&model, 1, &model.initial_state, DEFAULT_TREE_LIMIT).unwrap();
    assert!((v - optimum(&model).1.unwrap()).abs() < 1e-12);
}

#[test]
fn reachable_states_are_feasible_for_some_realization() {
    let model = inventory_instance(4, 3, 2);
    let states = sample_reachable_states(&model, 40, 5).unwrap();
    assert_eq!(states.len(), 4);
    for t in 2..=4 {
        for (prev, cur) in states[t - 2].iter().zip(&states[t - 1]) {
            assert!(cur.iter().all(|&v| v >= -1e-9));
            let fits = model.stage(t).realizations.iter().any(|r| {
                let resid = &r.a * cur + &r.b_mat * prev - &r.rhs;
                resid.amax() < 1e-8
            });
            assert!(fits, "stage {t} state {cur} is not reachable from {prev}");
        }
    }
    let distinct = states[1].iter().filter(|x| (*x - &states[1][0]).amax() > 1e-6).count();
    assert!(distinct > 30);
}

fn random_model(seed: u64) -> MultistageModel {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut stages = Vec::new();
    for t in 1..=3 {
        let m = if t == 1 { 1 } else { rng.random_range(1..4) };
        let raw: Vec<f64> = (0..m).map(|_| rng.random_range(0.2..1.0)).collect();
        let total: f64 = raw.iter().sum();
        let realizations = raw
            .iter()
            .map(|w| stock(rng.random_range(0.1..2.0), rng.random_range(0.0..1.0), rng.random_range(0.5..3.0), w / total))
            .collect();
        stages.push(StageFan { stage_index: t, realizations });
    }
    MultistageModel::new(stages, DVector::from_column_slice(&[rng.random_range(0.0..1.0), 0.0])).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn save_then_load_is_identity(seed in 0u64..1_000_000) {
        let model = random_model(seed);
        prop_assert_eq!(load_model(&save_model(&model)).unwrap(), model);
    }

    #[test]
    fn optimum_ignores_realization_order(seed in 0u64..1_000_000, rot in 0usize..3) {
        let model = random_model(seed);
        let mut permuted = model.clone();
        for fan in permuted.stages.iter_mut() {
            let k = rot % fan.realizations.len();
            fan.realizations.rotate_left(k);
            fan.realizations.reverse();
        }
        let a = optimum(&model).1.unwrap();
        let b = optimum(&permuted).1.unwrap();
        prop_assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0), "{} vs {}", a, b);
    }
}

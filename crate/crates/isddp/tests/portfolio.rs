use isddp::model::check_recourse;
use isddp::portfolio::{compare_policies, generate_instance, sample_market, PortfolioConfig};
use isddp::sddp::{self, expected_policy_cost, ErrorSchedule, RunOptions, StoppingRule, UpperBoundMode};
use nalgebra::DVector;

#[test]
fn degenerate_instance_lets_everything_move_to_cash() {
    let config = PortfolioConfig::new(1, 2, 1, 7);
    let model = generate_instance(&config);
    assert!(model.stages.iter().all(|f| f.len() == 1));
    let market = sample_market(&config);
    let n = config.n;
    let mut x = model.initial_state.clone();
    for t in 1..=2 {
        let r = &model.stage(t).realizations[0];
        let ret = &market.returns[t - 1][0];
        let nu = &market.costs[t - 1];
        let mut y = DVector::zeros(config.stage_dim());
        let mut cash = config.risk_free_return * x[n];
        for i in 0..n {
            let sell = ret[i] * x[i];
            y[2 * n + 1 + i] = sell;
            cash += (1.0 - nu[i]) * sell;
        }
        y[n] = cash;
        let total: f64 = y.rows(0, n + 1).sum();
        for i in 0..n {
            y[3 * n + 1 + i] = config.position_cap * total;
        }
        let resid = &r.a * &y + &r.b_mat * &x - &r.rhs;
        assert!(resid.amax() < 1e-12, "stage {t}: {resid}");
        assert!(y.iter().all(|&v| v >= 0.0));
        x = y;
    }
}

#[test]
fn generation_is_deterministic() {
    let c = PortfolioConfig::new(4, 5, 3, 99);
    assert_eq!(generate_instance(&c), generate_instance(&c));
    assert_ne!(generate_instance(&c), generate_instance(&PortfolioConfig { seed: 100, ..c }));
}

#[test]
fn desk_instance_data_stays_in_the_generating_bands() {
    let config = PortfolioConfig::new(10, 6, 4, 1);
    let market = sample_market(&config);
    assert!(market.means.iter().all(|m| (0.9..=1.4).contains(m)));
    assert!(market.std_devs.iter().all(|s| (0.1..=0.2).contains(s)));
    assert!(market.initial.iter().all(|w| (0.0..=10.0).contains(w)));
    let lo = 0.9 - 5.0 * 0.2;
    let hi = 1.4 + 5.0 * 0.2;
    for stage in &market.returns {
        for r in stage.iter().flatten() {
            assert!((lo..=hi).contains(r), "return {r}");
        }
    }
    for nu in market.costs.iter().flatten() {
        assert!((0.02 - 1e-12..=0.14 + 1e-12).contains(nu), "cost {nu}");
    }
    assert_eq!(market.returns[0].len(), 1);
    assert!(market.returns[1..].iter().all(|s| s.len() == 10));
}

#[test]
fn generated_instances_pass_the_recourse_check() {
    for seed in 0..5 {
        let model = generate_instance(&PortfolioConfig::new(5, 4, 3, seed));
        assert!(check_recourse(&model, 100, seed).unwrap().violations.is_empty());
    }
}

#[test]
fn identical_schedules_compare_to_zero() {
    let model = generate_instance(&PortfolioConfig::new(3, 4, 2, 5));
    let s = ErrorSchedule::Exact;
    let r = compare_policies(&model, &s, &s, 6, 50, 2).unwrap();
    assert_eq!(r.policy_gap_percent, 0.0);
    assert_eq!(r.work_reduction_percent, 0.0);
    assert_eq!(r.pivots_a, r.pivots_b);
}

#[test]
fn comparison_is_reproducible() {
    let model = generate_instance(&PortfolioConfig::new(4, 4, 2, 8));
    let a = ErrorSchedule::Exact;
    let b = ErrorSchedule::PivotCapTable { i_max: 6 };
    let first = compare_policies(&model, &a, &b, 8, 500, 3).unwrap();
    let second = compare_policies(&model, &a, &b, 8, 500, 3).unwrap();
    assert_eq!(first, second);
}

#[test]
fn converged_policy_cost_respects_the_lower_bound() {
    let model = generate_instance(&PortfolioConfig::new(3, 3, 2, 4));
    let options = RunOptions {
        stopping: StoppingRule { gap_tol: 1e-9, max_iters: 60, ub_every: 5 },
        upper_bound: UpperBoundMode::Enumerate,
        record_time: false,
        ..RunOptions::default()
    };
    let report = sddp::run(&model, &ErrorSchedule::Exact, &options, 1).unwrap();
    let lb = report.final_lower_bound().unwrap();
    let cost = expected_policy_cost(&model, &report.policy).unwrap();
    assert!(cost >= lb - 1e-6, "policy cost {cost} below lower bound {lb}");
    assert!(cost - lb <= 1e-3 * lb.abs(), "not converged: cost {cost}, lb {lb}");
}

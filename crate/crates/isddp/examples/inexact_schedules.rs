//! Lower bounds and total pivots under each accuracy schedule on a longer
//! inventory model.

use isddp::lp;
use isddp::model::{build_extensive_form, inventory_instance, DEFAULT_TREE_LIMIT};
use isddp::sddp::{self, ErrorSchedule, RunOptions, StoppingRule, UpperBoundMode};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let model = inventory_instance(5, 3, 9);
    let ef = build_extensive_form(&model, DEFAULT_TREE_LIMIT)?;
    let optimum = lp::solve_exact(&ef.lp)?.primal_objective.ok_or("extensive form has no optimum")?;
    let schedules = [
        ("exact", ErrorSchedule::Exact),
        ("const:0.05,0.05", ErrorSchedule::ConstantAbsolute { delta: 0.05, eps: 0.05 }),
        ("reldecay:0.1,0.01", ErrorSchedule::RelativeDecay { eps_bar: 0.1, eps0: 0.01 }),
        ("vanish:1,1", ErrorSchedule::VanishingAbsolute { c: 1.0, exponent: 1.0 }),
        ("captable:4", ErrorSchedule::PivotCapTable { i_max: 4 }),
    ];
    let options = RunOptions {
        stopping: StoppingRule { gap_tol: f64::NEG_INFINITY, max_iters: 60, ub_every: 1 },
        upper_bound: UpperBoundMode::None,
        record_time: false,
        ..RunOptions::default()
    };
    println!("optimum {optimum:.6}");
    println!("{:<18} {:>12} {:>12} {:>10}", "schedule", "lower bound", "shortfall", "pivots");
    for (name, schedule) in schedules {
        let report = sddp::run(&model, &schedule, &options, 3)?;
        let lb = report.final_lower_bound().unwrap_or(f64::NAN);
        println!("{name:<18} {lb:>12.6} {:>12.2e} {:>10}", optimum - lb, report.total_pivots());
    }
    Ok(())
}

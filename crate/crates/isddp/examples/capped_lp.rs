//! Dual simplex stopped after a fixed number of pivots.
//!
//! Every intermediate basis is dual feasible, so its objective is a lower
//! bound on the optimum and the bound tightens as the cap grows.

use isddp::lp::{self, LinearProgram};
use nalgebra::{DMatrix, DVector};

fn main() -> Result<(), lp::LpError> {
    // A transportation problem: 3 plants, 4 markets, supply equal to demand.
    let supply = [30.0, 25.0, 45.0];
    let demand = [20.0, 15.0, 40.0, 25.0];
    #[rustfmt::skip]
    let unit = [
        8.0, 6.0, 10.0, 9.0,
        9.0, 12.0, 13.0, 7.0,
        14.0, 9.0, 16.0, 5.0,
    ];
    let (p, m) = (supply.len(), demand.len());
    let cost = DVector::from_column_slice(&unit);
    let mut a = DMatrix::zeros(p + m, p * m);
    for i in 0..p {
        for j in 0..m {
            a[(i, i * m + j)] = 1.0;
            a[(p + j, i * m + j)] = 1.0;
        }
    }
    let b = DVector::from_iterator(p + m, supply.iter().chain(&demand).copied());
    let problem = LinearProgram::equality_form(cost, a, b)?;

    let exact = lp::solve_exact(&problem)?;
    let optimum = exact.primal_objective.expect("balanced transportation problems are feasible");
    println!("optimum {optimum} after {} phase-2 pivots", exact.pivots_used);
    println!("{:>4}  {:>12}  {:>10}  status", "cap", "dual bound", "gap");
    for cap in 0..=exact.pivots_used {
        let out = lp::solve_dual_capped(&problem, cap)?;
        let bound = out.dual_objective().unwrap_or(f64::NEG_INFINITY);
        println!("{cap:>4}  {bound:>12.4}  {:>10.4}  {:?}", optimum - bound, out.status);
    }
    Ok(())
}

//! Inexact cuts for the documented convex fixtures on a coarse grid.
//!
//! Columns: epsilon, stationarity defect, measured gap at the trial point,
//! crude and refined bounds, and the worst violation over the grid.

use isddp::convex::fixtures::{builtin_fixtures, verify_fixture, VerifyOptions};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let options = VerifyOptions { x_step: 0.02, ..VerifyOptions::default() };
    for fx in builtin_fixtures()? {
        let report = verify_fixture(&fx, &options)?;
        println!("{} ({} grid states) {}", report.name, report.grid_points, if report.passed() { "pass" } else { "FAIL" });
        for c in &report.cuts {
            println!(
                "  eps {:<6} ell {:.2e}  gap {:.2e}  crude {:.2e}  refined {:.2e}  C - Q {:.1e}",
                c.epsilon, c.ell, c.measured_gap, c.crude_bound, c.refined_bound, c.max_violation
            );
        }
        for d in &report.duals {
            println!("  eps {:<6} dual norm {:.3} <= {:.3} over {} points", d.epsilon, d.max_norm, d.bound, d.points_found);
        }
    }
    Ok(())
}

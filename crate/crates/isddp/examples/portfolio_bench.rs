//! SDDP against the cap-table variant on a generated portfolio instance.
//!
//! ```text
//! cargo run --release --example portfolio_bench -- 10 6 4 1
//! ```

use isddp::portfolio::{bench_sddp_vs_isddp, generate_instance, PortfolioConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<u64> = std::env::args().skip(1).map(|a| a.parse()).collect::<Result<_, _>>()?;
    let [m, t, n, seed] = match args[..] {
        [] => [5, 4, 3, 1],
        [m, t, n, seed] => [m, t, n, seed],
        _ => return Err("expected M T n seed".into()),
    };
    let config = PortfolioConfig::new(m as usize, t as usize, n as usize, seed);
    let model = generate_instance(&config);
    let (r, i_max) = bench_sddp_vs_isddp(&model, 20, 500, seed, None)?;
    println!("M={m} T={t} n={n} seed={seed}  I_max={i_max}  iterations={}", r.iterations);
    println!("pivots    sddp {:>8}  isddp {:>8}  reduction {:.2}%", r.pivots_a, r.pivots_b, r.work_reduction_percent);
    println!("cost      sddp {:>8.4}  isddp {:>8.4}  gap {:.4}%", r.cost_mean_a, r.cost_mean_b, r.policy_gap_percent);
    Ok(())
}

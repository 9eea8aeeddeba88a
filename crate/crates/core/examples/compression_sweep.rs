//! Success probability and compression efficiency against the number of NES
//! samples, over replicated seven-Gaussian landscapes.
//!
//! `cargo run --release --example compression_sweep -- [replicates] [jobs]`

use nested_entropy::landscape::TIE_TOLERANCE;
use nested_entropy::metrics::{benchmark_sweep, gaussian_family, SweepConfig};
use nested_entropy::GridSpace;

fn main() -> nested_entropy::Result<()> {
    let mut args = std::env::args().skip(1).map(|a| a.parse::<usize>().ok());
    let replicates = args.next().flatten().unwrap_or(100);
    let jobs = args.next().flatten().unwrap_or(1);
    let config = SweepConfig {
        replicates,
        jobs,
        ..SweepConfig::default()
    };
    let summary = benchmark_sweep(gaussian_family(7, GridSpace::default_2d()), &config)?;

    println!("{:>5} {:>10} {:>10}", "N", "P(success)", "mean CE");
    for r in &summary.records {
        println!("{:>5} {:>10.2} {:>10.2}", r.num_samples, r.success_probability, r.mean_ce);
    }
    let s = summary.success_trend();
    let ce = summary.ce_trend();
    println!("success rises with N: rho {:.3}, p {:.2e}", s.rho, s.p_value);
    println!("CE falls with N:      rho {:.3}, p {:.2e}", ce.rho, ce.p_value);

    let stuck = summary
        .outcomes
        .iter()
        .filter(|o| o.converged && (o.true_max - o.h_max) > TIE_TOLERANCE)
        .count();
    println!("{stuck} runs converged on a lower peak");
    Ok(())
}

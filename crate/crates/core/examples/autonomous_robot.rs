//! The full measure, infer, design loop against a hidden circle, with brute
//! force running alongside NES on every cycle.
//!
//! `cargo run --release --example autonomous_robot -- [cycles] [seed]`

use nested_entropy::circle::{CircleModel, FieldSpec};
use nested_entropy::design::{default_design_nes, run_autonomous_loop, DesignPolicy, LoopConfig, Searcher, Selector};
use nested_entropy::inference::PriorSpec;

fn main() {
    let mut args = std::env::args().skip(1).map(|a| a.parse::<u64>().ok());
    let cycles = args.next().flatten().unwrap_or(15) as usize;
    let seed = args.next().flatten().unwrap_or(0);

    let field = FieldSpec::default();
    let truth = CircleModel::new(0.6, -0.4, 1.2);
    let prior = PriorSpec::for_field(&field);
    let config = LoopConfig {
        policy: DesignPolicy {
            searcher: Searcher::Both(default_design_nes()),
            selector: Selector::RandomAmongOptima { seed },
        },
        cycles,
        seed,
        ..LoopConfig::default()
    };

    let records = match run_autonomous_loop(&truth, &field, &prior, &config) {
        Ok(r) => r,
        Err(f) => {
            eprintln!("stopped after {} cycles: {}", f.records.len(), f.error);
            std::process::exit(1);
        }
    };
    for r in &records {
        let cmp = r.comparison.expect("both searchers ran");
        println!(
            "{:>2}: measure ({:>5.2}, {:>5.2}) -> {:.2} | H {:.4} CE {:.2} | agree {} | r {:.2} +- {:.2}",
            r.cycle,
            r.chosen_location[0],
            r.chosen_location[1],
            r.measured_intensity,
            r.h_max,
            r.metrics.compression_efficiency,
            cmp.agree,
            r.posterior.means[2],
            r.posterior.std_devs[2]
        );
    }
    let last = records.last().unwrap().posterior;
    println!(
        "estimate ({:.2}, {:.2}, {:.2}), truth ({:.2}, {:.2}, {:.2})",
        last.means[0], last.means[1], last.means[2], truth.cx, truth.cy, truth.r
    );
}

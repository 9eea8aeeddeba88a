//! One NES run on a seven-peak landscape, compared with exhaustive search.

use nested_entropy::landscape::{brute_force_map, MixtureLandscape};
use nested_entropy::search::{run_nes, NesConfig};
use nested_entropy::GridSpace;

fn main() -> nested_entropy::Result<()> {
    let grid = GridSpace::default_2d();
    let landscape = MixtureLandscape::random(7, grid.clone(), 42)?;
    let truth = brute_force_map(&landscape, &grid)?;

    for n in [10, 25, 50] {
        let res = run_nes(&landscape, &grid, &NesConfig::default().with_samples(n).with_seed(1))?;
        let hit = (res.h_max - truth.max_value).abs() <= 1e-9;
        println!(
            "N = {n:>3}: best {:.5} (true {:.5}, {}), {} of {} cells evaluated, CE {:.2}, {} iterations",
            res.h_max,
            truth.max_value,
            if hit { "found" } else { "missed" },
            res.metrics.evaluations,
            grid.total_cells(),
            res.metrics.compression_efficiency,
            res.metrics.iterations
        );
        if let Some(last) = res.trace.last() {
            println!("         final threshold {:.5}", last.h_star);
        }
    }
    Ok(())
}

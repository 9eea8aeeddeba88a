//! Draws a few Gaussian-mixture landscapes and reports where their peaks are.
//!
//! `cargo run --example landscape_gallery -- [components]`

use nested_entropy::landscape::{brute_force_map, MixtureLandscape};
use nested_entropy::GridSpace;

fn main() -> nested_entropy::Result<()> {
    let components: usize = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(7);
    let grid = GridSpace::default_2d();
    for seed in 0..5 {
        let landscape = MixtureLandscape::random(components, grid.clone(), seed)?;
        let map = brute_force_map(&landscape, &grid)?;
        let peak = grid.center(map.argmax[0])?;
        println!(
            "seed {seed}: {} components, amplitude sum {:.3}, max {:.4} at ({:.2}, {:.2})",
            landscape.components().len(),
            landscape.amplitude_sum(),
            map.max_value,
            peak[0],
            peak[1]
        );
    }
    Ok(())
}

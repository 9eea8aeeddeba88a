//! Predictive-entropy map over the field for a small posterior, written as a
//! dense CSV, with the NES answer for the same map.
//!
//! `cargo run --example entropy_map -- [out.csv]`

use std::fs::File;

use nested_entropy::circle::{CircleModel, FieldSpec};
use nested_entropy::design::{entropy_objective, search_cycle, NesSchedule};
use nested_entropy::inference::PosteriorEnsemble;
use nested_entropy::landscape::brute_force_map;
use nested_entropy::search::NesConfig;

fn main() -> nested_entropy::Result<()> {
    let field = FieldSpec::default();
    // circles of different sizes and offsets standing in for a posterior
    let atoms = (0..25)
        .map(|i| {
            let t = i as f64 / 25.0 * std::f64::consts::TAU;
            CircleModel::new(0.5 + 0.4 * t.cos(), -0.3 + 0.4 * t.sin(), 1.0 + 0.3 * (2.0 * t).sin())
        })
        .collect();
    let ensemble = PosteriorEnsemble::new(atoms, 0.0)?;
    let objective = entropy_objective(&ensemble, &field);

    let map = brute_force_map(&objective, field.grid())?;
    let out = std::env::args().nth(1).unwrap_or_else(|| "entropy_map.csv".into());
    map.write_dense_csv(field.grid(), File::create(&out)?)?;
    println!("wrote {out}: max entropy {:.4} nats on {} cells", map.max_value, map.argmax.len());

    let nes = NesConfig::default().with_samples(100).with_seed(2);
    let found = search_cycle(objective, field.grid(), &nes, NesSchedule::default())?;
    println!(
        "NES: {:.4} nats on {} cells after {} evaluations (CE {:.2})",
        found.h_max,
        found.optimal_cells.len(),
        found.metrics.evaluations,
        found.metrics.compression_efficiency
    );
    Ok(())
}

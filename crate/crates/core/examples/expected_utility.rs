//! Expected information utility against predictive entropy on a tiny grid:
//! both pick the same cells.

use nested_entropy::circle::{CircleModel, FieldSpec};
use nested_entropy::design::{entropy_objective, OutcomeBinning};
use nested_entropy::inference::PosteriorEnsemble;
use nested_entropy::metrics::expected_utility;
use nested_entropy::{GridSpace, Objective};

fn main() -> nested_entropy::Result<()> {
    let field = FieldSpec::new(GridSpace::square(1.0, 5)?, 1.0, 0.1, 0.05)?;
    let atoms: Vec<CircleModel> = (0..10)
        .map(|i| CircleModel::new(-0.6 + 0.12 * i as f64, 0.1 * (i % 3) as f64, 0.3 + 0.05 * i as f64))
        .collect();
    let ensemble = PosteriorEnsemble::new(atoms.clone(), 0.0)?;
    let entropy = entropy_objective(&ensemble, &field).with_binning(OutcomeBinning::Midpoint);

    println!("cell   EU        entropy");
    for cell in field.grid().cells() {
        let eu = expected_utility(&atoms, cell, |m, c| Ok(field.forward(m, c)? > 0.55))?;
        println!("{:>4} {:>9.4} {:>9.4}", cell.0, eu, entropy.evaluate(cell)?);
    }
    Ok(())
}

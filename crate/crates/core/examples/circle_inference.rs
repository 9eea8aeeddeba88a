//! Nested sampling for a hidden circle from a handful of noisy intensity
//! readings.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use nested_entropy::circle::{CircleModel, FieldSpec, MeasurementLog};
use nested_entropy::inference::{nested_sampling, resample_posterior, NestedSamplingConfig, PosteriorEnsemble, PriorSpec};

fn main() -> nested_entropy::Result<()> {
    let field = FieldSpec::default();
    let truth = CircleModel::new(0.6, -0.4, 1.2);
    let prior = PriorSpec::for_field(&field);
    let mut rng = ChaCha8Rng::seed_from_u64(3);

    let mut log = MeasurementLog::new();
    for p in [[0.0, 0.0], [1.5, -0.5], [-1.0, 1.0], [0.6, -1.8], [2.5, 2.5], [-0.4, -0.4]] {
        let cell = field.grid().locate(&p)?;
        log.push(field.measure(&truth, cell, &mut rng)?);
    }

    let config = NestedSamplingConfig {
        seed: 9,
        ..NestedSamplingConfig::default()
    };
    let run = nested_sampling(&log, &prior, &field, &config)?;
    println!("log evidence {:.3} after {} iterations", run.log_evidence, run.iterations);

    // chain weights are logs; normalize by the evidence before resampling
    let weighted: Vec<_> = run.chain.iter().map(|(m, lw)| (*m, (lw - run.log_evidence).exp())).collect();
    let samples = resample_posterior(&weighted, config.posterior_samples, &mut rng)?;
    let ensemble = PosteriorEnsemble::new(samples, run.log_evidence)?;
    let s = ensemble.summary();
    for (i, name) in ["cx", "cy", "r"].iter().enumerate() {
        println!("{name}: {:.3} +- {:.3} (truth {:.3})", s.means[i], s.std_devs[i], truth.as_array()[i]);
    }
    Ok(())
}

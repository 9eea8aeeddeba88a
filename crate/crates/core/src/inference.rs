//! Nested-sampling inference over circle hypotheses.
//!
//! Live points are drawn from a uniform prior over `(cx, cy, r)`. Each
//! iteration discards the lowest-likelihood point, weights it by its
//! likelihood times the shell of prior mass it stands for, and replaces it by
//! a constrained random walk from a surviving point. The likelihood of the
//! binary sensor model is piecewise constant, so each point also carries a
//! uniform tie-breaking label and the constraint is taken lexicographically
//! on `(log L, label)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::circle::{CircleModel, FieldSpec, MeasurementLog};
use crate::error::{Error, Result};
use crate::grid::Extent;
use crate::walk::{reflect_real, StepAdapt};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Uniform prior over circle center and radius.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriorSpec {
    pub cx: Extent,
    pub cy: Extent,
    pub r_min: f64,
    pub r_max: f64,
}

impl PriorSpec {
    /// Centers anywhere in the field, radius in `[0.1, half the shorter side]`.
    pub fn for_field(field: &FieldSpec) -> Self {
        let ext = field.extents();
        let shorter = (ext[0][1] - ext[0][0]).min(ext[1][1] - ext[1][0]);
        Self {
            cx: ext[0],
            cy: ext[1],
            r_min: 0.1,
            r_max: 0.5 * shorter,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let proper = |[lo, hi]: Extent| lo.is_finite() && hi.is_finite() && lo < hi;
        if !proper(self.cx) || !proper(self.cy) {
            return Err(Error::config("prior center ranges must be proper intervals"));
        }
        if !(0.0 < self.r_min && self.r_min < self.r_max && self.r_max.is_finite()) {
            return Err(Error::config(format!(
                "prior radius range needs 0 < r_min < r_max, got [{}, {}]",
                self.r_min, self.r_max
            )));
        }
        Ok(())
    }

    fn bounds(&self) -> [Extent; 3] {
        [self.cx, self.cy, [self.r_min, self.r_max]]
    }

    pub fn contains(&self, m: &CircleModel) -> bool {
        let [x, y, r] = self.bounds();
        (x[0]..=x[1]).contains(&m.cx) && (y[0]..=y[1]).contains(&m.cy) && (r[0]..=r[1]).contains(&m.r)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> CircleModel {
        let [x, y, r] = self.bounds();
        CircleModel::new(
            rng.random_range(x[0]..=x[1]),
            rng.random_range(y[0]..=y[1]),
            rng.random_range(r[0]..=r[1]),
        )
    }
}

/// Gaussian log-likelihood of the log under `model`.
///
/// With `noise_sigma = 0` a reading that matches the prediction exactly
/// contributes 0 and any mismatch gives `-inf`.
pub fn log_likelihood(model: &CircleModel, log: &MeasurementLog, field: &FieldSpec) -> Result<f64> {
    let sigma = field.noise_sigma;
    let mut total = 0.0;
    for m in log.iter() {
        let predicted = field.forward(model, m.location)?;
        if sigma == 0.0 {
            if m.intensity != predicted {
                return Ok(f64::NEG_INFINITY);
            }
            continue;
        }
        let z = (m.intensity - predicted) / sigma;
        total += -0.5 * z * z - sigma.ln() - LN_SQRT_2PI;
    }
    Ok(total)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NestedSamplingConfig {
    pub live_points: usize,
    pub mcmc_steps: usize,
    /// Stop once the estimated evidence still held by the live points falls
    /// below this fraction of the accumulated evidence.
    pub termination: f64,
    pub seed: u64,
    /// Size of the equally weighted ensemble returned.
    pub posterior_samples: usize,
    pub max_iterations: usize,
}

impl Default for NestedSamplingConfig {
    fn default() -> Self {
        Self {
            live_points: 100,
            mcmc_steps: 20,
            termination: 1e-3,
            seed: 0,
            posterior_samples: 25,
            max_iterations: 200_000,
        }
    }
}

impl NestedSamplingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.live_points < 2 {
            return Err(Error::config("live_points must be at least 2"));
        }
        if self.posterior_samples == 0 {
            return Err(Error::config("posterior_samples must be at least 1"));
        }
        if !(self.termination > 0.0 && self.termination < 1.0) {
            return Err(Error::config("termination must lie in (0, 1)"));
        }
        if self.max_iterations == 0 {
            return Err(Error::config("max_iterations must be positive"));
        }
        Ok(())
    }
}

/// Equally weighted posterior draws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorEnsemble {
    pub log_evidence: f64,
    pub samples: Vec<CircleModel>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSummary {
    /// Means of `(cx, cy, r)`.
    pub means: [f64; 3],
    /// Standard deviations of `(cx, cy, r)`.
    pub std_devs: [f64; 3],
}

impl PosteriorEnsemble {
    pub fn new(samples: Vec<CircleModel>, log_evidence: f64) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::config("a posterior ensemble needs at least one sample"));
        }
        Ok(Self {
            log_evidence,
            samples,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn summary(&self) -> PosteriorSummary {
        let n = self.samples.len() as f64;
        let mut means = [0.0; 3];
        for s in &self.samples {
            for (m, v) in means.iter_mut().zip(s.as_array()) {
                *m += v / n;
            }
        }
        let mut var = [0.0; 3];
        for s in &self.samples {
            for ((acc, v), m) in var.iter_mut().zip(s.as_array()).zip(means) {
                *acc += (v - m) * (v - m) / n;
            }
        }
        PosteriorSummary {
            means,
            std_devs: var.map(f64::sqrt),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let e: Self = serde_json::from_str(s)?;
        Self::new(e.samples, e.log_evidence)
    }
}

/// Systematic resampling of a weighted chain into `count` equally weighted
/// draws.
pub fn resample_posterior<T: Clone, R: Rng + ?Sized>(chain: &[(T, f64)], count: usize, rng: &mut R) -> Result<Vec<T>> {
    if chain.is_empty() {
        return Err(Error::config("cannot resample an empty chain"));
    }
    if chain.iter().any(|(_, w)| !(*w >= 0.0 && w.is_finite())) {
        return Err(Error::config("chain weights must be finite and nonnegative"));
    }
    let total: f64 = chain.iter().map(|(_, w)| w).sum();
    if !(total > 0.0) {
        return Err(Error::config("chain weights are all zero"));
    }
    let step = 1.0 / count as f64;
    let mut u = rng.random_range(0.0..step);
    let mut out = Vec::with_capacity(count);
    let mut cumulative = 0.0;
    for (item, w) in chain {
        cumulative += w / total;
        while out.len() < count && u < cumulative {
            out.push(item.clone());
            u += step;
        }
    }
    // round-off can leave the last pointer just above the final cumulative sum
    let last = chain.iter().rev().find(|(_, w)| *w > 0.0).map(|(t, _)| t.clone());
    while out.len() < count {
        out.push(last.clone().expect("positive weight exists"));
    }
    Ok(out)
}

/// A run's weighted output before resampling.
#[derive(Debug, Clone, PartialEq)]
pub struct NestedRun {
    /// Discarded points with their log posterior weights (unnormalized).
    pub chain: Vec<(CircleModel, f64)>,
    pub log_evidence: f64,
    /// Log-likelihoods of the discarded points in discard order.
    pub discarded_log_likelihoods: Vec<f64>,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy)]
struct LivePoint {
    theta: [f64; 3],
    label: f64,
    log_l: f64,
}

impl LivePoint {
    fn model(&self) -> CircleModel {
        CircleModel::new(self.theta[0], self.theta[1], self.theta[2])
    }

    fn above(&self, log_l: f64, label: f64) -> bool {
        self.log_l > log_l || (self.log_l == log_l && self.label > label)
    }
}

fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let hi = a.max(b);
    hi + ((a - hi).exp() + (b - hi).exp()).ln()
}

/// Runs nested sampling and returns the weighted chain.
pub fn nested_sampling(
    log: &MeasurementLog,
    prior: &PriorSpec,
    field: &FieldSpec,
    config: &NestedSamplingConfig,
) -> Result<NestedRun> {
    config.validate()?;
    prior.validate()?;
    log.validate(field)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let like = |theta: &[f64; 3]| log_likelihood(&CircleModel::new(theta[0], theta[1], theta[2]), log, field);

    let nlive = config.live_points;
    let mut live = Vec::with_capacity(nlive);
    for _ in 0..nlive {
        let m = prior.sample(&mut rng);
        let theta = m.as_array();
        live.push(LivePoint {
            theta,
            label: rng.random::<f64>(),
            log_l: like(&theta)?,
        });
    }

    let bounds = prior.bounds();
    let widths = bounds.map(|[lo, hi]| hi - lo);
    let adapt = StepAdapt::default();
    let mut scale = 0.1;
    let (min_scale, max_scale) = (1e-6, 0.5);

    let shrink = (-1.0 / nlive as f64).exp();
    let log_shell = (1.0 - shrink).ln();
    let log_term = config.termination.ln();
    let mut log_x = 0.0;
    let mut log_z = f64::NEG_INFINITY;
    let mut chain = Vec::new();
    let mut discarded = Vec::new();
    let mut iterations = 0;

    loop {
        let worst = (0..nlive)
            .min_by(|&a, &b| {
                let (pa, pb) = (&live[a], &live[b]);
                pa.log_l.total_cmp(&pb.log_l).then(pa.label.total_cmp(&pb.label))
            })
            .expect("live set is nonempty");
        let dead = live[worst];
        // the shell between X_i and X_{i+1} = X_i * shrink
        let log_w = dead.log_l + log_x + log_shell;
        log_z = log_add(log_z, log_w);
        chain.push((dead.model(), log_w));
        discarded.push(dead.log_l);
        log_x += shrink.ln();
        iterations += 1;

        let max_live = live.iter().map(|p| p.log_l).fold(f64::NEG_INFINITY, f64::max);
        if log_z > f64::NEG_INFINITY && max_live + log_x - log_z < log_term {
            break;
        }
        if iterations >= config.max_iterations {
            return Err(Error::Inference {
                reason: format!("evidence did not settle within {} iterations", config.max_iterations),
                iterations,
                log_evidence: log_z,
            });
        }

        let mut source = rng.random_range(0..nlive - 1);
        if source >= worst {
            source += 1;
        }
        let mut current = live[source];
        let mut accepted = 0;
        for _ in 0..config.mcmc_steps {
            let mut theta = current.theta;
            for d in 0..3 {
                let half = scale * widths[d];
                let x = theta[d] + rng.random_range(-half..=half);
                theta[d] = reflect_real(x, bounds[d][0], bounds[d][1]);
            }
            let label = reflect_real(current.label + rng.random_range(-scale..=scale), 0.0, 1.0);
            let candidate = LivePoint {
                theta,
                label,
                log_l: like(&theta)?,
            };
            if candidate.above(dead.log_l, dead.label) {
                current = candidate;
                accepted += 1;
            }
        }
        if config.mcmc_steps > 0 {
            scale = adapt.adapt_scale(accepted, config.mcmc_steps, scale, min_scale, max_scale)?;
        }
        live[worst] = current;
    }

    // the remaining live points share what is left of the prior mass
    let log_each = log_x - (nlive as f64).ln();
    let mut rest: Vec<LivePoint> = live;
    rest.sort_by(|a, b| a.log_l.total_cmp(&b.log_l).then(a.label.total_cmp(&b.label)));
    for p in rest {
        let log_w = p.log_l + log_each;
        log_z = log_add(log_z, log_w);
        chain.push((p.model(), log_w));
    }
    Ok(NestedRun {
        chain,
        log_evidence: log_z,
        discarded_log_likelihoods: discarded,
        iterations,
    })
}

/// Nested sampling followed by resampling into an equally weighted ensemble
/// of `config.posterior_samples` circles.
pub fn nested_sampling_posterior(
    log: &MeasurementLog,
    prior: &PriorSpec,
    field: &FieldSpec,
    config: &NestedSamplingConfig,
) -> Result<PosteriorEnsemble> {
    let run = nested_sampling(log, prior, field, config)?;
    let weighted: Vec<(CircleModel, f64)> = run
        .chain
        .iter()
        .map(|(m, lw)| (*m, (lw - run.log_evidence).exp()))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5DEE_CE66_D1CE_5EED);
    let samples = resample_posterior(&weighted, config.posterior_samples, &mut rng)?;
    PosteriorEnsemble::new(samples, run.log_evidence)
}

#[cfg(test)]
mod tests {
    use approx::assert_abs_diff_eq;

    use super::*;
    use crate::circle::Measurement;
    use crate::grid::GridSpace;

    #[test]
    fn likelihood_examples() {
        let field = FieldSpec::default();
        let model = CircleModel::new(0.0, 0.0, 1.0);
        assert_eq!(log_likelihood(&model, &MeasurementLog::new(), &field).unwrap(), 0.0);

        let unit = FieldSpec::new(GridSpace::default_2d(), 1.0, 0.1, 1.0).unwrap();
        let center = unit.grid().locate(&[0.0, 0.0]).unwrap();
        let mut log = MeasurementLog::new();
        log.push(Measurement { location: center, intensity: 1.0 });
        assert_abs_diff_eq!(log_likelihood(&model, &log, &unit).unwrap(), -0.918_938_533_204_672_8, epsilon = 1e-12);

        let mut bright = MeasurementLog::new();
        bright.push(Measurement { location: center, intensity: 0.98 });
        let good = log_likelihood(&model, &bright, &field).unwrap();
        let bad = log_likelihood(&CircleModel::new(2.0, 2.0, 0.5), &bright, &field).unwrap();
        assert!(good > bad);
    }

    #[test]
    fn noiseless_mismatch_is_negative_infinity() {
        let field = FieldSpec::new(GridSpace::default_2d(), 1.0, 0.1, 0.0).unwrap();
        let center = field.grid().locate(&[0.0, 0.0]).unwrap();
        let mut log = MeasurementLog::new();
        log.push(Measurement { location: center, intensity: 1.0 });
        assert_eq!(log_likelihood(&CircleModel::new(0.0, 0.0, 1.0), &log, &field).unwrap(), 0.0);
        assert_eq!(log_likelihood(&CircleModel::new(2.0, 2.0, 0.2), &log, &field).unwrap(), f64::NEG_INFINITY);
    }

    #[test]
    fn resampling_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(resample_posterior(&[("a", 2.0)], 5, &mut rng).unwrap(), vec!["a"; 5]);
        assert_eq!(resample_posterior(&[("a", 1.0), ("b", 0.0)], 7, &mut rng).unwrap(), vec!["a"; 7]);
        assert!(resample_posterior(&[("a", 0.0), ("b", 0.0)], 3, &mut rng).is_err());
        assert!(resample_posterior::<&str, _>(&[], 3, &mut rng).is_err());
        assert!(resample_posterior(&[("a", -1.0), ("b", 2.0)], 3, &mut rng).is_err());

        let n = 10_000;
        let out = resample_posterior(&[(0, 1.0), (1, 3.0)], n, &mut rng).unwrap();
        assert_eq!(out.len(), n);
        let freq = out.iter().filter(|&&v| v == 1).count() as f64 / n as f64;
        assert!((freq - 0.75).abs() <= 3.0 * (0.25f64 * 0.75 / n as f64).sqrt());
    }

    #[test]
    fn config_and_prior_validation() {
        let field = FieldSpec::default();
        let prior = PriorSpec::for_field(&field);
        assert_eq!(prior.r_max, 3.0);
        assert!(prior.validate().is_ok());
        let bad = PriorSpec { r_min: 0.0, ..prior };
        assert!(bad.validate().is_err());
        let cfg = NestedSamplingConfig { live_points: 1, ..Default::default() };
        assert!(nested_sampling(&MeasurementLog::new(), &prior, &field, &cfg).is_err());
        let cfg = NestedSamplingConfig { posterior_samples: 0, ..Default::default() };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn iteration_cap_is_an_inference_error() {
        let field = FieldSpec::default();
        let prior = PriorSpec::for_field(&field);
        let cfg = NestedSamplingConfig { max_iterations: 10, ..Default::default() };
        let err = nested_sampling(&MeasurementLog::new(), &prior, &field, &cfg).unwrap_err();
        assert!(matches!(err, Error::Inference { iterations: 10, .. }));
    }

    #[test]
    fn discarded_likelihoods_rise_and_samples_stay_in_prior() {
        let field = FieldSpec::default();
        let prior = PriorSpec::for_field(&field);
        let truth = CircleModel::new(0.5, -0.5, 1.2);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut log = MeasurementLog::new();
        for _ in 0..12 {
            let cell = crate::grid::Cell(rng.random_range(0..field.grid().total_cells()));
            log.push(field.measure(&truth, cell, &mut rng).unwrap());
        }
        let cfg = NestedSamplingConfig { seed: 3, ..Default::default() };
        let run = nested_sampling(&log, &prior, &field, &cfg).unwrap();
        assert!(run.discarded_log_likelihoods.windows(2).all(|w| w[0] <= w[1]));
        assert!(run.chain.iter().all(|(m, _)| prior.contains(m)));
        let post = nested_sampling_posterior(&log, &prior, &field, &cfg).unwrap();
        assert_eq!(post.len(), 25);
        assert!(post.samples.iter().all(|m| prior.contains(m)));
        assert_eq!(post, nested_sampling_posterior(&log, &prior, &field, &cfg).unwrap());
    }

    #[test]
    fn empty_log_evidence_is_one() {
        let field = FieldSpec::default();
        let prior = PriorSpec::for_field(&field);
        let run = nested_sampling(&MeasurementLog::new(), &prior, &field, &NestedSamplingConfig::default()).unwrap();
        assert!(run.log_evidence.abs() < 1e-9, "log Z = {}", run.log_evidence);
    }

    #[test]
    fn ensemble_json() {
        let e = PosteriorEnsemble::new(vec![CircleModel::new(0.0, 1.0, 0.5)], -3.5).unwrap();
        let back = PosteriorEnsemble::from_json(&e.to_json().unwrap()).unwrap();
        assert_eq!(e, back);
        assert!(PosteriorEnsemble::from_json(r#"{"log_evidence":0,"samples":[]}"#).is_err());
        let s = e.summary();
        assert_eq!(s.means, [0.0, 1.0, 0.5]);
        assert_eq!(s.std_devs, [0.0; 3]);
    }
}

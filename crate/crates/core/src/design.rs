//! The inquiry phase and the closed inference/inquiry loop.
//!
//! Posterior atoms are pushed through the forward model at each candidate
//! location; the Shannon entropy of the resulting outcome distribution ranks
//! the candidates, and the maximizer is found either exhaustively or with
//! nested entropy sampling.

use std::collections::HashSet;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::circle::{CircleModel, FieldSpec, MeasurementLog};
use crate::error::{Error, Result};
use crate::grid::Cell;
use crate::inference::{nested_sampling_posterior, NestedSamplingConfig, PosteriorEnsemble, PosteriorSummary, PriorSpec};
use crate::landscape::{brute_force_map, BruteForceMap, TIE_TOLERANCE};
use crate::metrics::RunMetrics;
use crate::objective::{CachedObjective, Objective};
use crate::search::{run_nes, NesConfig, NesResult};


/// How predicted intensities are discretized into outcomes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeBinning {
    /// Two outcomes split at the midpoint of the inside and outside levels.
    #[default]
    Midpoint,
    /// `k` equal-width bins spanning the outside..inside intensity range.
    Histogram(usize),
}

impl OutcomeBinning {
    pub fn bins(&self) -> usize {
        match self {
            OutcomeBinning::Midpoint => 2,
            OutcomeBinning::Histogram(k) => *k,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.bins() < 2 {
            return Err(Error::config("outcome binning needs at least 2 bins"));
        }
        Ok(())
    }

    /// Bin of an intensity; bin 0 holds the brightest readings.
    fn bin_of(&self, intensity: f64, field: &FieldSpec) -> usize {
        let (lo, hi) = (field.intensity_outside, field.intensity_inside);
        match *self {
            OutcomeBinning::Midpoint => usize::from(intensity < 0.5 * (lo + hi)),
            OutcomeBinning::Histogram(k) => {
                let t = ((hi - intensity) / (hi - lo) * k as f64).floor();
                (t.max(0.0) as usize).min(k - 1)
            }
        }
    }

    /// Representative intensity of each bin, brightest first.
    fn values(&self, field: &FieldSpec) -> Vec<f64> {
        let (lo, hi) = (field.intensity_outside, field.intensity_inside);
        match *self {
            OutcomeBinning::Midpoint => vec![hi, lo],
            OutcomeBinning::Histogram(k) => {
                let w = (hi - lo) / k as f64;
                (0..k).map(|i| hi - (i as f64 + 0.5) * w).collect()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictiveDistribution {
    /// Representative outcome of each bin, brightest first.
    pub outcomes: Vec<f64>,
    pub probabilities: Vec<f64>,
}

impl PredictiveDistribution {
    pub fn new(outcomes: Vec<f64>, probabilities: Vec<f64>) -> Result<Self> {
        if outcomes.len() != probabilities.len() || probabilities.is_empty() {
            return Err(Error::config("outcomes and probabilities must be nonempty and equally long"));
        }
        if probabilities.iter().any(|p| !(*p >= 0.0)) {
            return Err(Error::config("probabilities must be nonnegative"));
        }
        let total: f64 = probabilities.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::config(format!("probabilities sum to {total}, not 1")));
        }
        Ok(Self {
            outcomes,
            probabilities,
        })
    }
}

fn bin_counts(atoms: &[CircleModel], x: f64, y: f64, field: &FieldSpec, binning: OutcomeBinning) -> Vec<usize> {
    let mut counts = vec![0usize; binning.bins()];
    for atom in atoms {
        counts[binning.bin_of(field.intensity_at(atom, x, y), field)] += 1;
    }
    counts
}

/// Fractions of posterior atoms predicting each outcome at `candidate`.
pub fn predictive_distribution(
    ensemble: &PosteriorEnsemble,
    candidate: Cell,
    field: &FieldSpec,
    binning: OutcomeBinning,
) -> Result<PredictiveDistribution> {
    binning.validate()?;
    if ensemble.is_empty() {
        return Err(Error::config("empty posterior ensemble"));
    }
    let [x, y] = field.location(candidate)?;
    let counts = bin_counts(&ensemble.samples, x, y, field, binning);
    let s = ensemble.len() as f64;
    PredictiveDistribution::new(binning.values(field), counts.iter().map(|&c| c as f64 / s).collect())
}

/// Shannon entropy in nats, with `0 ln 0 = 0`.
pub fn predictive_entropy(dist: &PredictiveDistribution) -> f64 {
    shannon_entropy(&dist.probabilities)
}

pub fn shannon_entropy(probabilities: &[f64]) -> f64 {
    let h: f64 = probabilities
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| -p * p.ln())
        .sum();
    h.max(0.0)
}

/// Predictive entropy as a function of the measurement cell.
///
/// Excluded cells score `-inf` so neither searcher picks them.
#[derive(Debug, Clone)]
pub struct EntropyObjective<'a> {
    atoms: &'a [CircleModel],
    field: &'a FieldSpec,
    binning: OutcomeBinning,
    excluded: HashSet<Cell>,
}

impl<'a> EntropyObjective<'a> {
    pub fn new(ensemble: &'a PosteriorEnsemble, field: &'a FieldSpec) -> Self {
        Self {
            atoms: &ensemble.samples,
            field,
            binning: OutcomeBinning::Midpoint,
            excluded: HashSet::new(),
        }
    }

    pub fn with_binning(mut self, binning: OutcomeBinning) -> Self {
        self.binning = binning;
        self
    }

    pub fn excluding(mut self, cells: impl IntoIterator<Item = Cell>) -> Self {
        self.excluded.extend(cells);
        self
    }
}

impl Objective for EntropyObjective<'_> {
    fn evaluate(&self, cell: Cell) -> Result<f64> {
        let [x, y] = self.field.location(cell)?;
        if self.excluded.contains(&cell) {
            return Ok(f64::NEG_INFINITY);
        }
        let counts = bin_counts(self.atoms, x, y, self.field, self.binning);
        let s = self.atoms.len() as f64;
        let p: Vec<f64> = counts.iter().map(|&c| c as f64 / s).collect();
        Ok(shannon_entropy(&p))
    }
}

/// Builds the entropy objective with the default two-outcome binning.
pub fn entropy_objective<'a>(ensemble: &'a PosteriorEnsemble, field: &'a FieldSpec) -> EntropyObjective<'a> {
    EntropyObjective::new(ensemble, field)
}

pub type CostFn = Arc<dyn Fn(Cell) -> f64 + Send + Sync>;

#[derive(Clone)]
pub enum Selector {
    /// Uniform draw among the optimal cells.
    RandomAmongOptima { seed: u64 },
    /// Cell of least cost; ties go to the lowest cell index.
    MinimumCost(CostFn),
    /// Least travel from the previous measurement location (the field center
    /// before the first measurement).
    NearestToArm,
}

impl std::fmt::Debug for Selector {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Selector::RandomAmongOptima { seed } => f.debug_struct("RandomAmongOptima").field("seed", seed).finish(),
            Selector::MinimumCost(_) => f.write_str("MinimumCost(..)"),
            Selector::NearestToArm => f.write_str("NearestToArm"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Searcher {
    BruteForce,
    Nes(NesConfig),
    /// NES chooses the experiment; brute force runs on the same posterior for
    /// comparison.
    Both(NesConfig),
}

#[derive(Debug, Clone)]
pub struct DesignPolicy {
    pub searcher: Searcher,
    pub selector: Selector,
}

impl Default for DesignPolicy {
    fn default() -> Self {
        Self {
            searcher: Searcher::Nes(default_design_nes()),
            selector: Selector::RandomAmongOptima { seed: 0 },
        }
    }
}

/// NES settings used for the 61×61 circle-design problem.
pub fn default_design_nes() -> NesConfig {
    NesConfig {
        num_samples: 100,
        explore_steps: 20,
        initial_step: vec![4],
        ..NesConfig::default()
    }
}

/// Picks one cell from a nonempty optimal set.
pub fn select_experiment<R: Rng + ?Sized>(optimal: &[Cell], selector: &Selector, rng: &mut R) -> Result<Cell> {
    let first = *optimal
        .first()
        .ok_or_else(|| Error::config("cannot select from an empty optimal set"))?;
    if optimal.len() == 1 {
        return Ok(first);
    }
    match selector {
        Selector::RandomAmongOptima { .. } => Ok(optimal[rng.random_range(0..optimal.len())]),
        Selector::MinimumCost(cost) => Ok(min_cost(optimal, |c| cost(c))),
        Selector::NearestToArm => Err(Error::config(
            "NearestToArm needs the arm position; use select_nearest",
        )),
    }
}

fn min_cost(optimal: &[Cell], cost: impl Fn(Cell) -> f64) -> Cell {
    let mut sorted = optimal.to_vec();
    sorted.sort_unstable();
    let mut best = sorted[0];
    let mut best_cost = cost(best);
    for &c in &sorted[1..] {
        let v = cost(c);
        if v < best_cost {
            best = c;
            best_cost = v;
        }
    }
    best
}

/// The optimal cell closest to `arm` in field coordinates.
pub fn select_nearest(optimal: &[Cell], field: &FieldSpec, arm: [f64; 2]) -> Result<Cell> {
    if optimal.is_empty() {
        return Err(Error::config("cannot select from an empty optimal set"));
    }
    for &c in optimal {
        field.location(c)?;
    }
    Ok(min_cost(optimal, |c| {
        let [x, y] = field.location(c).expect("checked above");
        (x - arm[0]).hypot(y - arm[1])
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub brute_force_h_max: f64,
    pub nes_h_max: f64,
    pub nes_converged: bool,
    /// NES maximum equals the brute-force maximum within tolerance.
    pub agree: bool,
    pub brute_force_metrics: RunMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoopRecord {
    pub cycle: usize,
    pub chosen_cell: Cell,
    pub chosen_location: [f64; 2],
    pub h_max: f64,
    pub optimal_count: usize,
    pub metrics: RunMetrics,
    pub posterior: PosteriorSummary,
    pub log_evidence: f64,
    pub measured_intensity: f64,
    #[serde(default)]
    pub nes_restarts: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub comparison: Option<Comparison>,
}

/// Everything produced by one cycle, handed to loop observers.
#[derive(Debug, Clone)]
pub struct CycleOutput {
    pub record: LoopRecord,
    pub ensemble: PosteriorEnsemble,
    pub map: Option<BruteForceMap>,
    pub nes: Option<CycleSearch>,
}

#[derive(Debug, Clone)]
pub struct LoopConfig {
    pub policy: DesignPolicy,
    pub inference: NestedSamplingConfig,
    pub binning: OutcomeBinning,
    /// Skip cells that were already measured.
    pub exclude_measured: bool,
    pub schedule: NesSchedule,
    pub cycles: usize,
    pub seed: u64,
}

impl Default for LoopConfig {
    fn default() -> Self {
        Self {
            policy: DesignPolicy::default(),
            inference: NestedSamplingConfig::default(),
            binning: OutcomeBinning::Midpoint,
            exclude_measured: true,
            schedule: NesSchedule::default(),
            cycles: 15,
            seed: 0,
        }
    }
}

/// A loop that stopped early, with the records completed before the failure.
#[derive(Debug)]
pub struct LoopFailure {
    pub records: Vec<LoopRecord>,
    pub log: MeasurementLog,
    pub error: Error,
}

impl std::fmt::Display for LoopFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "loop stopped after {} cycles: {}", self.records.len(), self.error)
    }
}

impl std::error::Error for LoopFailure {}

/// How the design loop drives NES within one cycle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NesSchedule {
    /// Independent runs per cycle; they share one entropy look-up table and
    /// the best maximum wins.
    pub runs: usize,
    /// Fresh attempts (with doubled sample count) allowed when a run
    /// converges with every live sample at zero entropy.
    pub restarts: usize,
}

impl Default for NesSchedule {
    fn default() -> Self {
        Self { runs: 1, restarts: 3 }
    }
}

/// Result of [`search_cycle`].
#[derive(Debug, Clone, PartialEq)]
pub struct CycleSearch {
    /// Union of the optimal cells of the runs that reached the best maximum.
    pub optimal_cells: Vec<Cell>,
    pub h_max: f64,
    /// Distinct evaluations over all runs and restarts.
    pub metrics: RunMetrics,
    pub restarts: usize,
    pub runs: Vec<NesResult>,
}

/// Runs NES `schedule.runs` times over one memoized objective.
///
/// A run that converges with every live sample at zero entropy has only seen
/// cells where all posterior atoms agree, so it is repeated with a fresh seed
/// and twice the samples, up to `schedule.restarts` times.
pub fn search_cycle<O: Objective>(
    objective: O,
    grid: &crate::grid::GridSpace,
    config: &NesConfig,
    schedule: NesSchedule,
) -> Result<CycleSearch> {
    if schedule.runs == 0 {
        return Err(Error::config("at least one NES run per cycle is required"));
    }
    let cached = CachedObjective::new(objective);
    let mut runs = Vec::with_capacity(schedule.runs);
    let mut restarts = 0;
    let mut iterations = 0;
    for run in 0..schedule.runs {
        let mut cfg = NesConfig {
            seed: cycle_seed(config.seed, run, 5),
            ..config.clone()
        };
        let mut attempt = 0;
        loop {
            let res = run_nes(&cached, grid, &cfg)?;
            iterations += res.metrics.iterations;
            let degenerate = res.converged && res.h_max <= 0.0;
            if !degenerate || attempt == schedule.restarts {
                runs.push(res);
                break;
            }
            attempt += 1;
            restarts += 1;
            cfg.seed = cycle_seed(cfg.seed, attempt, 4);
            cfg.num_samples = cfg.num_samples.saturating_mul(2);
        }
    }
    let h_max = runs.iter().map(|r| r.h_max).fold(f64::NEG_INFINITY, f64::max);
    let best: Vec<&NesResult> = runs
        .iter()
        .filter(|r| r.h_max == h_max || h_max - r.h_max <= config.convergence_tol)
        .collect();
    let converged = best.iter().all(|r| r.converged);
    let mut optimal_cells: Vec<Cell> = best
        .iter()
        .flat_map(|r| r.optimal_cells.iter().copied())
        .filter(|&c| cached.evaluate(c).is_ok_and(|h| h_max - h <= config.convergence_tol))
        .collect();
    optimal_cells.sort_unstable();
    optimal_cells.dedup();
    let metrics = RunMetrics::new(grid.total_cells(), cached.evaluations(), iterations, converged)?;
    Ok(CycleSearch {
        optimal_cells,
        h_max,
        metrics,
        restarts,
        runs,
    })
}

fn cycle_seed(base: u64, cycle: usize, stream: u64) -> u64 {
    base ^ (cycle as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ stream.wrapping_mul(0xD1B5_4A32_D192_ED03)
}

/// Runs the closed loop against a hidden `truth`, calling `observe` after
/// every completed cycle.
pub fn run_autonomous_loop_with<F>(
    truth: &CircleModel,
    field: &FieldSpec,
    prior: &PriorSpec,
    config: &LoopConfig,
    mut observe: F,
) -> std::result::Result<(Vec<LoopRecord>, MeasurementLog), LoopFailure>
where
    F: FnMut(&CycleOutput),
{
    let mut records = Vec::new();
    let mut log = MeasurementLog::new();
    macro_rules! bail {
        ($e:expr) => {
            match $e {
                Ok(v) => v,
                Err(error) => return Err(LoopFailure { records, log, error }),
            }
        };
    }
    if config.cycles == 0 {
        bail!(Err(Error::config("cycles must be at least 1")));
    }
    bail!(field.validate_model(truth));
    bail!(config.binning.validate());
    let mut sensor_rng = ChaCha8Rng::seed_from_u64(cycle_seed(config.seed, 0, 1));
    let mut select_rng = ChaCha8Rng::seed_from_u64(match config.policy.selector {
        Selector::RandomAmongOptima { seed } => seed,
        _ => config.seed,
    });
    let mut arm = {
        let ext = field.extents();
        [0.5 * (ext[0][0] + ext[0][1]), 0.5 * (ext[1][0] + ext[1][1])]
    };
    let n = field.grid().total_cells();

    for cycle in 1..=config.cycles {
        let ns = NestedSamplingConfig {
            seed: cycle_seed(config.seed, cycle, 2),
            ..config.inference.clone()
        };
        let ensemble = bail!(nested_sampling_posterior(&log, prior, field, &ns));
        let mut objective = EntropyObjective::new(&ensemble, field).with_binning(config.binning);
        if config.exclude_measured {
            objective = objective.excluding(log.iter().map(|m| m.location));
        }

        let nes_cfg = |c: &NesConfig| NesConfig {
            seed: cycle_seed(c.seed ^ config.seed, cycle, 3),
            ..c.clone()
        };
        let mut restarts = 0;
        let (optimal, h_max, metrics, map, nes, comparison) = match &config.policy.searcher {
            Searcher::BruteForce => {
                let map = bail!(brute_force_map(&objective, field.grid()));
                (
                    map.argmax.clone(),
                    map.max_value,
                    RunMetrics::brute_force(n),
                    Some(map),
                    None,
                    None,
                )
            }
            Searcher::Nes(c) => {
                let res = bail!(search_cycle(objective.clone(), field.grid(), &nes_cfg(c), config.schedule));
                restarts = res.restarts;
                (res.optimal_cells.clone(), res.h_max, res.metrics, None, Some(res), None)
            }
            Searcher::Both(c) => {
                let map = bail!(brute_force_map(&objective, field.grid()));
                let res = bail!(search_cycle(objective.clone(), field.grid(), &nes_cfg(c), config.schedule));
                restarts = res.restarts;
                let cmp = Comparison {
                    brute_force_h_max: map.max_value,
                    nes_h_max: res.h_max,
                    nes_converged: res.metrics.converged,
                    agree: (map.max_value - res.h_max).abs() <= TIE_TOLERANCE,
                    brute_force_metrics: RunMetrics::brute_force(n),
                };
                (res.optimal_cells.clone(), res.h_max, res.metrics, Some(map), Some(res), Some(cmp))
            }
        };

        let chosen = match &config.policy.selector {
            Selector::NearestToArm => bail!(select_nearest(&optimal, field, arm)),
            other => bail!(select_experiment(&optimal, other, &mut select_rng)),
        };
        let measurement = bail!(field.measure(truth, chosen, &mut sensor_rng));
        let location = bail!(field.location(chosen));
        arm = location;
        log.push(measurement);

        let record = LoopRecord {
            cycle,
            chosen_cell: chosen,
            chosen_location: location,
            h_max,
            optimal_count: optimal.len(),
            metrics,
            posterior: ensemble.summary(),
            log_evidence: ensemble.log_evidence,
            measured_intensity: measurement.intensity,
            nes_restarts: restarts,
            comparison,
        };
        observe(&CycleOutput {
            record: record.clone(),
            ensemble,
            map,
            nes,
        });
        records.push(record);
    }
    Ok((records, log))
}

/// Runs the closed loop and returns one record per cycle.
pub fn run_autonomous_loop(
    truth: &CircleModel,
    field: &FieldSpec,
    prior: &PriorSpec,
    config: &LoopConfig,
) -> std::result::Result<Vec<LoopRecord>, LoopFailure> {
    run_autonomous_loop_with(truth, field, prior, config, |_| {}).map(|(records, _)| records)
}

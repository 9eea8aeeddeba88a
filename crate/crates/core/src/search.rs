//! Nested entropy sampling.
//!
//! A set of `N` live experiments is kept over a discrete grid. Each outer
//! iteration takes the live sample with the least entropy, `H*`, as a hard
//! constraint, copies a random survivor above it, walks the copy around under
//! the constraint `H > H*`, and puts the result in place of the discarded
//! sample. `H*` rises monotonically and the live set contracts onto the
//! maximum-entropy experiments. Every entropy value is memoized, so the cost
//! of a run is the number of distinct cells ever evaluated.

use std::collections::{BTreeSet, HashMap};

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Cell, GridSpace};
use crate::metrics::RunMetrics;
use crate::objective::Objective;
use crate::walk::{reflect_index, StepAdapt};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSample {
    pub cell: Cell,
    pub entropy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NesConfig {
    pub num_samples: usize,
    /// Proposal moves per replacement.
    pub explore_steps: usize,
    /// Initial proposal half-width in cells; one entry per dimension, or a
    /// single entry applied to all of them.
    pub initial_step: Vec<usize>,
    pub step_adapt: StepAdapt,
    pub convergence_tol: f64,
    pub max_iterations: usize,
    pub seed: u64,
}

impl Default for NesConfig {
    fn default() -> Self {
        Self {
            num_samples: 25,
            explore_steps: 20,
            initial_step: vec![4],
            step_adapt: StepAdapt::default(),
            convergence_tol: 1e-9,
            max_iterations: 100_000,
            seed: 0,
        }
    }
}

impl NesConfig {
    pub fn with_samples(mut self, n: usize) -> Self {
        self.num_samples = n;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_samples < 2 {
            return Err(Error::config(format!(
                "num_samples must be at least 2, got {}",
                self.num_samples
            )));
        }
        if self.initial_step.is_empty() || self.initial_step.contains(&0) {
            return Err(Error::config("initial_step must be at least one cell in every dimension"));
        }
        if !(self.convergence_tol >= 0.0) {
            return Err(Error::config("convergence_tol must be nonnegative"));
        }
        if self.max_iterations == 0 {
            return Err(Error::config("max_iterations must be positive"));
        }
        self.step_adapt.validate()
    }

    /// Per-dimension initial step for `grid`, capped at the grid span.
    pub fn steps_for(&self, grid: &GridSpace) -> Result<Vec<usize>> {
        let steps = match self.initial_step.len() {
            1 => vec![self.initial_step[0]; grid.dims()],
            d if d == grid.dims() => self.initial_step.clone(),
            d => {
                return Err(Error::config(format!(
                    "initial_step has {d} entries for a {}-dimensional grid",
                    grid.dims()
                )))
            }
        };
        Ok(steps
            .iter()
            .enumerate()
            .map(|(d, &s)| s.min(grid.span(d)).max(1))
            .collect())
    }
}

/// One row of the per-iteration trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iteration: usize,
    #[serde(rename = "H_star")]
    pub h_star: f64,
    pub replaced_cell: Cell,
    pub accepted_cell: Cell,
    pub m: usize,
}

/// Writes trace rows as CSV with the header
/// `iteration,H_star,replaced_cell,accepted_cell,m`.
pub fn write_trace_csv<W: std::io::Write>(rows: &[TraceRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

/// Mutable state of a single run: live samples, the threshold, and the
/// entropy look-up table.
#[derive(Debug, Clone, Default)]
pub struct SearchState {
    pub samples: Vec<ExperimentSample>,
    pub threshold: f64,
    pub threshold_history: Vec<f64>,
    pub iteration: usize,
    /// Current proposal half-width per dimension.
    pub step: Vec<usize>,
    pub trace: Vec<TraceRow>,
    cache: HashMap<Cell, f64>,
}

impl SearchState {
    pub fn new() -> Self {
        Self {
            threshold: f64::NEG_INFINITY,
            ..Self::default()
        }
    }

    /// Entropy of `cell`, from the look-up table when it has been seen.
    pub fn entropy_of<O: Objective + ?Sized>(&mut self, cell: Cell, objective: &O) -> Result<f64> {
        if let Some(&h) = self.cache.get(&cell) {
            return Ok(h);
        }
        let h = objective.evaluate(cell)?;
        if h.is_nan() {
            return Err(Error::Objective(format!("objective returned NaN at cell {cell}")));
        }
        self.cache.insert(cell, h);
        Ok(h)
    }

    /// Distinct objective evaluations so far.
    pub fn evaluations(&self) -> usize {
        self.cache.len()
    }

    pub fn cached(&self, cell: Cell) -> Option<f64> {
        self.cache.get(&cell).copied()
    }

    /// Cells evaluated so far, in index order.
    pub fn visited(&self) -> Vec<Cell> {
        let mut v: Vec<Cell> = self.cache.keys().copied().collect();
        v.sort_unstable();
        v
    }

    /// Position and entropy of the least-entropy live sample. Ties go to the
    /// lowest position.
    pub fn select_threshold(&self) -> Result<(usize, f64)> {
        let mut it = self.samples.iter().enumerate();
        let (mut worst, first) = it
            .next()
            .ok_or_else(|| Error::State("no live samples".into()))?;
        let mut h_star = first.entropy;
        for (i, s) in it {
            if s.entropy < h_star {
                worst = i;
                h_star = s.entropy;
            }
        }
        Ok((worst, h_star))
    }

    fn spread(&self) -> f64 {
        let (lo, hi) = self
            .samples
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), s| {
                (lo.min(s.entropy), hi.max(s.entropy))
            });
        if lo == hi {
            0.0
        } else {
            hi - lo
        }
    }
}

/// Outcome of one [`explore`] call.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Exploration {
    pub sample: ExperimentSample,
    pub accepted: usize,
    pub proposed: usize,
}

/// Walks `seed` under the hard constraint `H > h_star`.
///
/// Each of `config.explore_steps` proposals offsets the current cell by a
/// uniform integer in `[-step, step]` per dimension, reflected at the grid
/// edges. A proposal is kept iff its entropy exceeds `h_star`. After the walk
/// the step in `state` is adapted from the acceptance rate of this call.
pub fn explore<O, R>(
    seed: ExperimentSample,
    h_star: f64,
    config: &NesConfig,
    grid: &GridSpace,
    state: &mut SearchState,
    objective: &O,
    rng: &mut R,
) -> Result<Exploration>
where
    O: Objective + ?Sized,
    R: Rng + ?Sized,
{
    if !(seed.entropy > h_star) {
        return Err(Error::State(format!(
            "explore seed entropy {} does not exceed threshold {h_star}",
            seed.entropy
        )));
    }
    if state.step.len() != grid.dims() {
        state.step = config.steps_for(grid)?;
    }
    let dims = grid.cells_per_dim().to_vec();
    let mut current = seed;
    let mut pos = grid.indices(seed.cell)?;
    let mut proposal = vec![0usize; dims.len()];
    let mut accepted = 0;
    for _ in 0..config.explore_steps {
        for (d, &n) in dims.iter().enumerate() {
            let s = state.step[d] as i64;
            let offset = rng.random_range(-s..=s);
            proposal[d] = reflect_index(pos[d] as i64 + offset, n);
        }
        let cell = grid.cell_at(&proposal)?;
        let h = state.entropy_of(cell, objective)?;
        if h > h_star {
            pos.copy_from_slice(&proposal);
            current = ExperimentSample { cell, entropy: h };
            accepted += 1;
        }
    }
    if config.step_adapt.enabled && config.explore_steps > 0 {
        for d in 0..dims.len() {
            state.step[d] =
                config
                    .step_adapt
                    .adapt_cells(accepted, config.explore_steps, state.step[d], grid.span(d))?;
        }
    }
    Ok(Exploration {
        sample: current,
        accepted,
        proposed: config.explore_steps,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NesResult {
    /// Distinct live cells within `convergence_tol` of the best, in index order.
    pub optimal_cells: Vec<Cell>,
    pub h_max: f64,
    pub metrics: RunMetrics,
    pub converged: bool,
    pub threshold_history: Vec<f64>,
    #[serde(skip)]
    pub final_samples: Vec<ExperimentSample>,
    #[serde(skip)]
    pub visited: Vec<Cell>,
    #[serde(skip)]
    pub trace: Vec<TraceRow>,
}

/// Runs nested entropy sampling to maximize `objective` over `grid`.
///
/// Stops when the live entropies span at most `convergence_tol` or after
/// `max_iterations` outer iterations; the latter is reported through
/// `converged = false`, not as an error.
pub fn run_nes<O: Objective + ?Sized>(objective: &O, grid: &GridSpace, config: &NesConfig) -> Result<NesResult> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut state = SearchState::new();
    state.step = config.steps_for(grid)?;

    let n = grid.total_cells();
    let start: Vec<Cell> = if config.num_samples <= n {
        index::sample(&mut rng, n, config.num_samples)
            .into_iter()
            .map(Cell)
            .collect()
    } else {
        (0..config.num_samples)
            .map(|_| Cell(rng.random_range(0..n)))
            .collect()
    };
    for cell in start {
        let entropy = state.entropy_of(cell, objective)?;
        state.samples.push(ExperimentSample { cell, entropy });
    }

    let mut converged = false;
    loop {
        if state.spread() <= config.convergence_tol {
            converged = true;
            break;
        }
        if state.iteration >= config.max_iterations {
            break;
        }
        let (worst, h_star) = state.select_threshold()?;
        state.threshold = h_star;
        state.threshold_history.push(h_star);

        let survivors: Vec<usize> = (0..state.samples.len())
            .filter(|&i| state.samples[i].entropy > h_star)
            .collect();
        // spread > tol guarantees at least one survivor
        let source = state.samples[survivors[rng.random_range(0..survivors.len())]];
        let trial = explore(source, h_star, config, grid, &mut state, objective, &mut rng)?;

        let replaced = state.samples[worst].cell;
        state.samples[worst] = trial.sample;
        state.trace.push(TraceRow {
            iteration: state.iteration,
            h_star,
            replaced_cell: replaced,
            accepted_cell: trial.sample.cell,
            m: state.evaluations(),
        });
        state.iteration += 1;
    }

    let h_max = state
        .samples
        .iter()
        .map(|s| s.entropy)
        .fold(f64::NEG_INFINITY, f64::max);
    let optimal_cells: BTreeSet<Cell> = state
        .samples
        .iter()
        .filter(|s| s.entropy == h_max || h_max - s.entropy <= config.convergence_tol)
        .map(|s| s.cell)
        .collect();
    let metrics = RunMetrics::new(n, state.evaluations(), state.iteration, converged)?;
    Ok(NesResult {
        optimal_cells: optimal_cells.into_iter().collect(),
        h_max,
        metrics,
        converged,
        visited: state.visited(),
        threshold_history: std::mem::take(&mut state.threshold_history),
        trace: std::mem::take(&mut state.trace),
        final_samples: state.samples,
    })
}

#[cfg(test)]
mod tests {
    use std::cell::Cell as Counter;

    use super::*;
    use crate::landscape::{brute_force_map, GaussianComponent, MixtureLandscape};

    fn sample(cell: usize, entropy: f64) -> ExperimentSample {
        ExperimentSample {
            cell: Cell(cell),
            entropy,
        }
    }

    #[test]
    fn cache_hits_do_not_count() {
        let calls = Counter::new(0usize);
        let f = |c: Cell| {
            calls.set(calls.get() + 1);
            c.0 as f64
        };
        let mut st = SearchState::new();
        assert_eq!(st.entropy_of(Cell(3), &f).unwrap(), 3.0);
        assert_eq!(st.evaluations(), 1);
        assert_eq!(st.entropy_of(Cell(3), &f).unwrap(), 3.0);
        assert_eq!(st.evaluations(), 1);
        assert_eq!(calls.get(), 1);

        let grid = GridSpace::default_2d();
        for c in grid.cells() {
            st.entropy_of(c, &f).unwrap();
        }
        assert_eq!(st.evaluations(), 3721);
        assert_eq!(calls.get(), 3721);
    }

    #[test]
    fn nan_objective_is_an_error() {
        let mut st = SearchState::new();
        let f = |_c: Cell| f64::NAN;
        assert!(matches!(st.entropy_of(Cell(0), &f), Err(Error::Objective(_))));
    }

    #[test]
    fn threshold_selection() {
        let mut st = SearchState::new();
        assert!(st.select_threshold().is_err());
        st.samples = vec![sample(0, 0.2), sample(1, 0.9), sample(2, 0.5)];
        assert_eq!(st.select_threshold().unwrap(), (0, 0.2));
        st.samples = vec![sample(4, 0.7), sample(5, 0.7)];
        assert_eq!(st.select_threshold().unwrap(), (0, 0.7));
        st.samples = vec![sample(4, 0.7), sample(5, 0.1), sample(6, 0.1)];
        assert_eq!(st.select_threshold().unwrap(), (1, 0.1));
    }

    #[test]
    fn config_validation() {
        assert!(NesConfig::default().with_samples(1).validate().is_err());
        let mut c = NesConfig::default();
        c.initial_step = vec![0];
        assert!(c.validate().is_err());
        let grid = GridSpace::default_2d();
        c.initial_step = vec![1, 2, 3];
        assert!(c.steps_for(&grid).is_err());
        c.initial_step = vec![100];
        assert_eq!(c.steps_for(&grid).unwrap(), vec![60, 60]);
        let f = |_c: Cell| 1.0;
        assert!(run_nes(&f, &grid, &NesConfig::default().with_samples(1)).is_err());
    }

    #[test]
    fn config_json_keys() {
        let json = r#"{"num_samples": 30, "explore_steps": 10, "initial_step": [3, 5],
            "convergence_tol": 1e-9, "max_iterations": 500, "seed": 9}"#;
        let c: NesConfig = serde_json::from_str(json).unwrap();
        assert_eq!(c.num_samples, 30);
        assert_eq!(c.initial_step, vec![3, 5]);
        assert!(c.step_adapt.enabled);
        assert!(serde_json::from_str::<NesConfig>(r#"{"samples": 3}"#).is_err());
    }

    #[test]
    fn zero_explore_steps_returns_seed() {
        let grid = GridSpace::square(1.0, 5).unwrap();
        let mut cfg = NesConfig::default();
        cfg.explore_steps = 0;
        let mut st = SearchState::new();
        let f = |c: Cell| c.0 as f64;
        let seed = sample(12, 12.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let out = explore(seed, 3.0, &cfg, &grid, &mut st, &f, &mut rng).unwrap();
        assert_eq!(out.sample, seed);
        assert_eq!(st.evaluations(), 0);
    }

    #[test]
    fn explore_requires_seed_above_threshold() {
        let grid = GridSpace::square(1.0, 5).unwrap();
        let f = |c: Cell| c.0 as f64;
        let mut st = SearchState::new();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let r = explore(sample(2, 2.0), 2.0, &NesConfig::default(), &grid, &mut st, &f, &mut rng);
        assert!(r.is_err());
    }

    #[test]
    fn explore_keeps_the_constraint() {
        let grid = GridSpace::default_2d();
        let l = MixtureLandscape::random(7, grid.clone(), 11).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let cfg = NesConfig::default();
        for trial in 0..50 {
            let mut st = SearchState::new();
            let cell = Cell(rng.random_range(0..grid.total_cells()));
            let h = st.entropy_of(cell, &l).unwrap();
            let h_star = h * (trial as f64 / 50.0);
            let out = explore(sample(cell.0, h), h_star, &cfg, &grid, &mut st, &l, &mut rng).unwrap();
            assert!(out.sample.entropy > h_star);
            assert_eq!(st.cached(out.sample.cell), Some(out.sample.entropy));
        }
    }

    #[test]
    fn explore_climbs_under_the_constraint() {
        // single Gaussian: walking under H > H* should not lose height on
        // average; count runs that end at or above the seed
        let grid = GridSpace::default_2d();
        let peak = GaussianComponent {
            amplitude: 1.0,
            x: 0.3,
            y: -0.4,
            a: 1.0,
            b: 1.0,
            c: 0.0,
        };
        let l = MixtureLandscape::new(grid.clone(), vec![peak]).unwrap();
        let mut cfg = NesConfig::default();
        cfg.explore_steps = 100;
        let mut higher = 0;
        for seed in 0..100u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut st = SearchState::new();
            let cell = grid.cell_at(&[10 + (seed % 20) as usize, 45]).unwrap();
            let h = st.entropy_of(cell, &l).unwrap();
            let out = explore(sample(cell.0, h), 0.9 * h, &cfg, &grid, &mut st, &l, &mut rng).unwrap();
            if out.sample.entropy >= h {
                higher += 1;
            }
        }
        assert!(higher >= 60, "only {higher} of 100 runs ended at or above the seed");
    }

    #[test]
    fn constant_objective_converges_immediately() {
        let grid = GridSpace::default_2d();
        let f = |_c: Cell| 0.5;
        let r = run_nes(&f, &grid, &NesConfig::default()).unwrap();
        assert!(r.converged);
        assert_eq!(r.metrics.iterations, 0);
        assert_eq!(r.optimal_cells.len(), 25);
        assert_eq!(r.metrics.evaluations, 25);
    }

    #[test]
    fn iteration_cap_reports_non_convergence() {
        let grid = GridSpace::default_2d();
        let l = MixtureLandscape::random(7, grid.clone(), 1).unwrap();
        let mut cfg = NesConfig::default();
        cfg.max_iterations = 3;
        let r = run_nes(&l, &grid, &cfg).unwrap();
        assert!(!r.converged);
        assert_eq!(r.metrics.iterations, 3);
        assert_eq!(r.trace.len(), 3);
    }

    #[test]
    fn more_samples_than_cells() {
        let grid = GridSpace::square(1.0, 2).unwrap();
        let f = |c: Cell| c.0 as f64;
        let r = run_nes(&f, &grid, &NesConfig::default().with_samples(10)).unwrap();
        assert!(r.converged);
        assert_eq!(r.optimal_cells, vec![Cell(3)]);
        assert_eq!(r.final_samples.len(), 10);
    }

    #[test]
    fn finds_a_single_peak_and_is_deterministic() {
        let grid = GridSpace::default_2d();
        let l = MixtureLandscape::random(1, grid.clone(), 8).unwrap();
        let truth = brute_force_map(&l, &grid).unwrap();
        let cfg = NesConfig::default().with_samples(50).with_seed(4);
        let a = run_nes(&l, &grid, &cfg).unwrap();
        let b = run_nes(&l, &grid, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.trace, b.trace);
        assert!(a.converged);
        assert_eq!(a.optimal_cells, truth.argmax);
        assert!(a.metrics.evaluations < grid.total_cells());
    }

    #[test]
    fn trace_csv_header() {
        let rows = [TraceRow {
            iteration: 0,
            h_star: 0.25,
            replaced_cell: Cell(4),
            accepted_cell: Cell(7),
            m: 12,
        }];
        let mut buf = Vec::new();
        write_trace_csv(&rows, &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "iteration,H_star,replaced_cell,accepted_cell,m\n0,0.25,4,7,12\n"
        );
    }
}

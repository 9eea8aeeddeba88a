//! Run metrics, the replicated benchmark sweep, and the decision-theoretic
//! expected-utility oracle.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::grid::{Cell, GridSpace};
use crate::landscape::{brute_force_map, MixtureLandscape, TIE_TOLERANCE};
use crate::search::{run_nes, NesConfig};

/// Ratio of candidate experiments to entropy evaluations, `n / m`.
pub fn compression_efficiency(n: usize, m: usize) -> Result<f64> {
    if m == 0 || n == 0 {
        return Err(Error::Metrics(format!(
            "compression efficiency needs n >= 1 and m >= 1 (n = {n}, m = {m})"
        )));
    }
    Ok(n as f64 / m as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub total_cells: usize,
    pub evaluations: usize,
    pub compression_efficiency: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl RunMetrics {
    pub fn new(total_cells: usize, evaluations: usize, iterations: usize, converged: bool) -> Result<Self> {
        Ok(Self {
            total_cells,
            evaluations,
            compression_efficiency: compression_efficiency(total_cells, evaluations)?,
            iterations,
            converged,
        })
    }

    /// Metrics of an exhaustive search: every cell evaluated once.
    pub fn brute_force(total_cells: usize) -> Self {
        Self {
            total_cells,
            evaluations: total_cells,
            compression_efficiency: 1.0,
            iterations: 0,
            converged: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    #[serde(rename = "N")]
    pub num_samples: usize,
    #[serde(rename = "mean_CE")]
    pub mean_ce: f64,
    pub success_probability: f64,
    pub replicates: usize,
}

/// Outcome of one NES run inside a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReplicateOutcome {
    pub num_samples: usize,
    pub replicate: usize,
    pub success: bool,
    pub converged: bool,
    pub compression_efficiency: f64,
    pub h_max: f64,
    pub true_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub records: Vec<SweepRecord>,
    #[serde(skip)]
    pub outcomes: Vec<ReplicateOutcome>,
}

impl SweepSummary {
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for r in &self.records {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.records)?)
    }

    /// Replicate-level Spearman test that success rises with `N`.
    pub fn success_trend(&self) -> TrendTest {
        let (x, y): (Vec<f64>, Vec<f64>) = self
            .outcomes
            .iter()
            .map(|o| (o.num_samples as f64, f64::from(u8::from(o.success))))
            .unzip();
        spearman_trend(&x, &y, Trend::Increasing)
    }

    /// Replicate-level Spearman test that compression efficiency falls with `N`.
    pub fn ce_trend(&self) -> TrendTest {
        let (x, y): (Vec<f64>, Vec<f64>) = self
            .outcomes
            .iter()
            .map(|o| (o.num_samples as f64, o.compression_efficiency))
            .unzip();
        spearman_trend(&x, &y, Trend::Decreasing)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub n_values: Vec<usize>,
    pub replicates: usize,
    /// Template for every run; `num_samples` and `seed` are overridden.
    pub nes: NesConfig,
    pub seed: u64,
    /// Worker threads; 1 runs everything on the calling thread.
    pub jobs: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            n_values: vec![5, 10, 20, 50, 100],
            replicates: 100,
            nes: NesConfig::default(),
            seed: 0,
            jobs: 1,
        }
    }
}

fn mix_seed(base: u64, a: u64, b: u64) -> u64 {
    // splitmix64 finalizer over the combined words
    let mut z = base
        .wrapping_add(a.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(b.wrapping_mul(0xBF58_476D_1CE4_E5B9));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Runs NES for every `N` in `config.n_values` on `config.replicates`
/// landscapes drawn from `family(seed)`.
///
/// Replicate `r` uses the same landscape for every `N`. A run succeeds iff it
/// converged and its `h_max` matches the landscape's brute-force maximum
/// within [`TIE_TOLERANCE`].
pub fn benchmark_sweep<F>(family: F, config: &SweepConfig) -> Result<SweepSummary>
where
    F: Fn(u64) -> Result<MixtureLandscape> + Sync,
{
    if config.replicates == 0 {
        return Err(Error::config("replicates must be at least 1"));
    }
    if config.n_values.is_empty() {
        return Err(Error::config("at least one N value is required"));
    }
    if let Some(&n) = config.n_values.iter().find(|&&n| n < 2) {
        return Err(Error::config(format!("every N must be at least 2, got {n}")));
    }
    config.nes.validate()?;

    let replicate = |r: usize| -> Result<Vec<ReplicateOutcome>> {
        let landscape = family(mix_seed(config.seed, r as u64, 0))?;
        let grid = landscape.grid().clone();
        let truth = brute_force_map(&landscape, &grid)?;
        config
            .n_values
            .iter()
            .map(|&n| {
                let nes = NesConfig {
                    num_samples: n,
                    seed: mix_seed(config.seed, r as u64, n as u64 + 1),
                    ..config.nes.clone()
                };
                let res = run_nes(&landscape, &grid, &nes)?;
                let success = res.converged && (res.h_max - truth.max_value).abs() <= TIE_TOLERANCE;
                Ok(ReplicateOutcome {
                    num_samples: n,
                    replicate: r,
                    success,
                    converged: res.converged,
                    compression_efficiency: res.metrics.compression_efficiency,
                    h_max: res.h_max,
                    true_max: truth.max_value,
                })
            })
            .collect()
    };

    let per_replicate: Vec<Vec<ReplicateOutcome>> = if config.jobs <= 1 {
        (0..config.replicates).map(replicate).collect::<Result<_>>()?
    } else {
        use rayon::prelude::*;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.jobs)
            .build()
            .map_err(|e| Error::config(e.to_string()))?;
        pool.install(|| {
            (0..config.replicates)
                .into_par_iter()
                .map(replicate)
                .collect::<Result<_>>()
        })?
    };

    let outcomes: Vec<ReplicateOutcome> = per_replicate.into_iter().flatten().collect();
    let records = config
        .n_values
        .iter()
        .map(|&n| {
            let runs: Vec<&ReplicateOutcome> =
                outcomes.iter().filter(|o| o.num_samples == n).collect();
            let k = runs.len() as f64;
            SweepRecord {
                num_samples: n,
                mean_ce: runs.iter().map(|o| o.compression_efficiency).sum::<f64>() / k,
                success_probability: runs.iter().filter(|o| o.success).count() as f64 / k,
                replicates: runs.len(),
            }
        })
        .collect();
    Ok(SweepSummary { records, outcomes })
}

/// Landscape family for sweeps: `components` random Gaussians on `grid`.
pub fn gaussian_family(components: usize, grid: GridSpace) -> impl Fn(u64) -> Result<MixtureLandscape> + Sync {
    move |seed| MixtureLandscape::random(components, grid.clone(), seed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Trend {
    Increasing,
    Decreasing,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrendTest {
    pub rho: f64,
    /// One-sided p-value for the requested direction; 1 when undefined.
    pub p_value: f64,
}

impl TrendTest {
    pub fn significant(&self, alpha: f64) -> bool {
        self.p_value < alpha
    }
}

/// Ranks with ties sharing their average rank (1-based).
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    sxy / (sxx * syy).sqrt()
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    pearson(&average_ranks(x), &average_ranks(y))
}

/// One-sided Spearman test for a monotone trend of `y` in `x`.
///
/// Up to 8 points the p-value is exact over all permutations of `y`; beyond
/// that it uses the Student-t approximation with `n - 2` degrees of freedom.
pub fn spearman_trend(x: &[f64], y: &[f64], trend: Trend) -> TrendTest {
    let n = x.len();
    let rho = if n == y.len() && n >= 3 { spearman(x, y) } else { f64::NAN };
    if !rho.is_finite() {
        return TrendTest { rho, p_value: 1.0 };
    }
    let signed = |r: f64| match trend {
        Trend::Increasing => r,
        Trend::Decreasing => -r,
    };
    let observed = signed(rho);
    let p_value = if n <= 8 {
        let rx = average_ranks(x);
        let ry = average_ranks(y);
        let mut perm: Vec<usize> = (0..n).collect();
        let (mut hits, mut total) = (0usize, 0usize);
        permutations(&mut perm, 0, &mut |p| {
            let shuffled: Vec<f64> = p.iter().map(|&i| ry[i]).collect();
            total += 1;
            if signed(pearson(&rx, &shuffled)) >= observed - 1e-12 {
                hits += 1;
            }
        });
        hits as f64 / total as f64
    } else if observed >= 1.0 {
        0.0
    } else {
        let df = (n - 2) as f64;
        let t = observed * (df / (1.0 - observed * observed)).sqrt();
        let dist = StudentsT::new(0.0, 1.0, df).expect("df > 0");
        1.0 - dist.cdf(t)
    };
    TrendTest { rho, p_value }
}

fn permutations(items: &mut Vec<usize>, k: usize, visit: &mut impl FnMut(&[usize])) {
    if k == items.len() {
        visit(items);
        return;
    }
    for i in k..items.len() {
        items.swap(k, i);
        permutations(items, k + 1, visit);
        items.swap(k, i);
    }
}

/// Expected Shannon-information utility of measuring at `cell`.
///
/// The atoms are equally weighted posterior samples. For each distinct
/// predicted outcome `d`, the hypothetical posterior keeps only the atoms that
/// predict `d`; its utility is `Σ_θ p log p` (nats). The result is the
/// `p(d)`-weighted sum of these utilities and is never positive.
pub fn expected_utility<M, O, F>(atoms: &[M], cell: Cell, forward: F) -> Result<f64>
where
    F: Fn(&M, Cell) -> Result<O>,
    O: PartialEq,
{
    if atoms.is_empty() {
        return Err(Error::config("expected utility needs a nonempty posterior"));
    }
    let predictions = atoms
        .iter()
        .map(|m| forward(m, cell))
        .collect::<Result<Vec<O>>>()?;
    let s = atoms.len() as f64;
    let mut outcomes: Vec<&O> = Vec::new();
    for p in &predictions {
        if !outcomes.contains(&p) {
            outcomes.push(p);
        }
    }
    let mut eu = 0.0;
    for d in outcomes {
        let matching = predictions.iter().filter(|p| *p == d).count() as f64;
        let p_d = matching / s;
        // p(θ | d) over every atom: 1/matching for consistent atoms, 0 otherwise
        let utility: f64 = predictions
            .iter()
            .map(|p| {
                let post = if p == d { 1.0 / matching } else { 0.0 };
                if post > 0.0 {
                    post * post.ln()
                } else {
                    0.0
                }
            })
            .sum();
        eu += p_d * utility;
    }
    Ok(eu)
}

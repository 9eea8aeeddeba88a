//! Acceptance suite. Each criterion prints one PASS/FAIL line; the process
//! exits nonzero if any criterion fails.
//!
//! Run with `cargo test --release -p nested-entropy --test acceptance`.

use std::cell::RefCell;
use std::collections::HashMap;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use nested_entropy::circle::{CircleModel, FieldSpec, MeasurementLog};
use nested_entropy::design::{
    default_design_nes, predictive_entropy, run_autonomous_loop, DesignPolicy, LoopConfig, PredictiveDistribution,
    Searcher, Selector,
};
use nested_entropy::inference::{nested_sampling_posterior, NestedSamplingConfig, PosteriorEnsemble, PriorSpec};
use nested_entropy::landscape::{brute_force_map, MixtureLandscape};
use nested_entropy::metrics::{benchmark_sweep, expected_utility, gaussian_family, SweepConfig};
use nested_entropy::search::{run_nes, NesConfig};
use nested_entropy::{Cell, GridSpace};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Kolmogorov-Smirnov test of samples against U(lo, hi), using the
/// asymptotic Kolmogorov distribution with Stephens' small-sample correction.
fn ks_uniform_p(samples: &[f64], lo: f64, hi: f64) -> f64 {
    let mut u: Vec<f64> = samples.iter().map(|x| (x - lo) / (hi - lo)).collect();
    u.sort_by(f64::total_cmp);
    let n = u.len() as f64;
    let d = u
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let above = (i as f64 + 1.0) / n - x;
            let below = x - i as f64 / n;
            above.max(below)
        })
        .fold(0.0, f64::max);
    let lambda = (n.sqrt() + 0.12 + 0.11 / n.sqrt()) * d;
    let mut p = 0.0;
    for k in 1..=100 {
        let k = k as f64;
        let term = 2.0 * (-1f64).powf(k - 1.0) * (-2.0 * k * k * lambda * lambda).exp();
        p += term;
        if term.abs() < 1e-12 {
            break;
        }
    }
    p.clamp(0.0, 1.0)
}

fn is_local_max(map: &[f64], grid: &GridSpace, cell: Cell) -> bool {
    let idx = grid.indices(cell).unwrap();
    let (nx, ny) = (grid.cells_per_dim()[0] as i64, grid.cells_per_dim()[1] as i64);
    let v = map[cell.0];
    for dx in -1..=1i64 {
        for dy in -1..=1i64 {
            let (x, y) = (idx[0] as i64 + dx, idx[1] as i64 + dy);
            if (dx, dy) == (0, 0) || x < 0 || y < 0 || x >= nx || y >= ny {
                continue;
            }
            let c = grid.cell_at(&[x as usize, y as usize]).unwrap();
            if map[c.0] > v {
                return false;
            }
        }
    }
    true
}

fn design_config(nes: NesConfig, cycles: usize, seed: u64) -> LoopConfig {
    LoopConfig {
        policy: DesignPolicy {
            searcher: Searcher::Both(nes),
            selector: Selector::RandomAmongOptima { seed },
        },
        cycles,
        seed,
        ..LoopConfig::default()
    }
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let field = FieldSpec::default();
    let prior = PriorSpec::for_field(&field);
    let truth = CircleModel::new(0.6, -0.4, 1.2);
    assert_eq!(field.grid().total_cells(), 3721);

    let default_cfg = LoopConfig {
        inference: NestedSamplingConfig {
            posterior_samples: 25,
            ..NestedSamplingConfig::default()
        },
        ..design_config(default_design_nes(), 20, 11)
    };
    let recs = run_autonomous_loop(&truth, &field, &prior, &default_cfg).expect("loop runs");
    let med = median(recs.iter().map(|r| r.metrics.compression_efficiency).collect());
    let wrong = recs
        .iter()
        .filter(|r| !r.comparison.expect("both searchers").agree)
        .count();

    let mut bracketing = Vec::new();
    for n in [25, 50, 100] {
        for steps in [10, 20, 40] {
            let nes = NesConfig {
                num_samples: n,
                explore_steps: steps,
                ..default_design_nes()
            };
            let recs = run_autonomous_loop(&truth, &field, &prior, &design_config(nes, 20, 11)).expect("loop runs");
            let ce = median(recs.iter().map(|r| r.metrics.compression_efficiency).collect());
            let all_agree = recs.iter().all(|r| r.comparison.unwrap().agree);
            if (3.0..=6.0).contains(&ce) && all_agree {
                bracketing.push(format!("N={n}/steps={steps}: CE {ce:.2}"));
            }
        }
    }
    let elapsed = start.elapsed();
    outcome(
        med >= 2.0 && wrong == 0 && !bracketing.is_empty() && elapsed < Duration::from_secs(60),
        format!(
            "default median CE {med:.2} (>= 2), wrong argmax in {wrong}/20 cycles, configs in [3, 6] with correct argmax: {bracketing:?}, {:.1}s",
            elapsed.as_secs_f64()
        ),
    )
}

fn criterion_2() -> Outcome {
    let grid = GridSpace::square(3.0, 41).unwrap();
    let mut success = 0;
    let mut unexplained = 0;
    let mut detail = Vec::new();
    for r in 0..50u64 {
        let landscape = MixtureLandscape::random(7, grid.clone(), 20_000 + r).unwrap();
        let truth = brute_force_map(&landscape, &grid).unwrap();
        let res = run_nes(&landscape, &grid, &NesConfig::default().with_samples(50).with_seed(r)).unwrap();
        let hit = (res.h_max - truth.max_value).abs() <= 1e-9;
        if res.converged && hit {
            success += 1;
        } else if res.converged {
            // a converged miss must sit on a local peak
            if !res.optimal_cells.iter().all(|&c| is_local_max(&truth.values, &grid, c)) {
                unexplained += 1;
            }
            detail.push(format!("#{r} local peak {:.4} vs {:.4}", res.h_max, truth.max_value));
        } else {
            detail.push(format!("#{r} not converged"));
        }
    }
    let rate = success as f64 / 50.0;
    outcome(
        rate >= 0.95 && unexplained == 0,
        format!("success {success}/50 = {rate:.2} (>= 0.95), unexplained failures {unexplained} {detail:?}"),
    )
}

fn criterion_3() -> Outcome {
    let cfg = SweepConfig {
        n_values: vec![5, 10, 20, 50, 100],
        replicates: 100,
        seed: 3,
        jobs: 4,
        ..SweepConfig::default()
    };
    let summary = benchmark_sweep(gaussian_family(7, GridSpace::default_2d()), &cfg).unwrap();
    let success = summary.success_trend();
    let ce = summary.ce_trend();
    let table: Vec<String> = summary
        .records
        .iter()
        .map(|r| format!("N={} P={:.2} CE={:.2}", r.num_samples, r.success_probability, r.mean_ce))
        .collect();
    outcome(
        success.significant(0.05) && ce.significant(0.05),
        format!(
            "success rho {:.3} p {:.2e}; CE rho {:.3} p {:.2e}; {table:?}",
            success.rho, success.p_value, ce.rho, ce.p_value
        ),
    )
}

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut bad = 0;
    for run in 0..1000u64 {
        let side = rng.random_range(5..=41);
        let grid = GridSpace::square(3.0, side).unwrap();
        let components = rng.random_range(1..=9);
        let landscape = MixtureLandscape::random(components, grid.clone(), run).unwrap();
        let cfg = NesConfig {
            num_samples: rng.random_range(2..=60),
            explore_steps: rng.random_range(1..=30),
            initial_step: vec![rng.random_range(1..=8)],
            seed: run,
            ..NesConfig::default()
        };
        let res = run_nes(&landscape, &grid, &cfg).unwrap();
        let monotone = res.threshold_history.windows(2).all(|w| w[0] <= w[1]);
        let conserved = res.final_samples.len() == cfg.num_samples;
        let above = res
            .final_samples
            .iter()
            .all(|s| res.threshold_history.last().is_none_or(|&h| s.entropy >= h));
        if !(monotone && conserved && above) {
            bad += 1;
        }
    }
    outcome(bad == 0, format!("{bad} of 1000 runs broke threshold monotonicity or sample conservation"))
}

fn criterion_5() -> Outcome {
    let mut violations = 0;
    let mut runs = 0;
    for seed in 0..300u64 {
        let side = 5 + (seed as usize % 37);
        let grid = GridSpace::square(3.0, side).unwrap();
        let landscape = MixtureLandscape::random(1 + seed as usize % 7, grid.clone(), seed).unwrap();
        let calls: RefCell<HashMap<Cell, usize>> = RefCell::new(HashMap::new());
        let instrumented = |c: Cell| {
            *calls.borrow_mut().entry(c).or_default() += 1;
            landscape.evaluate(c).unwrap()
        };
        let cfg = NesConfig::default().with_samples(2 + seed as usize % 80).with_seed(seed);
        let res = run_nes(&instrumented, &grid, &cfg).unwrap();
        let calls = calls.into_inner();
        let n = grid.total_cells();
        let m = res.metrics.evaluations;
        let once = calls.values().all(|&k| k == 1);
        let ok = once
            && m == calls.len()
            && m <= n
            && res.metrics.compression_efficiency >= 1.0
            && res.metrics.compression_efficiency == n as f64 / m as f64;
        if !ok {
            violations += 1;
        }
        runs += 1;
    }
    // a warm cache answers repeat queries without new evaluations
    let grid = GridSpace::square(3.0, 9).unwrap();
    let mut state = nested_entropy::search::SearchState::new();
    let count = RefCell::new(0usize);
    let f = |c: Cell| {
        *count.borrow_mut() += 1;
        c.0 as f64
    };
    for c in grid.cells() {
        state.entropy_of(c, &f).unwrap();
    }
    for c in grid.cells() {
        state.entropy_of(c, &f).unwrap();
    }
    let warm_ok = state.evaluations() == 81 && *count.borrow() == 81;
    outcome(
        violations == 0 && warm_ok,
        format!("{violations} of {runs} runs violated m <= n, CE >= 1, or single evaluation per cell; warm-cache check {warm_ok}"),
    )
}

fn criterion_6() -> Outcome {
    let half = PredictiveDistribution::new(vec![1.0, 0.1], vec![0.5, 0.5]).unwrap();
    let certain = PredictiveDistribution::new(vec![1.0, 0.1], vec![1.0, 0.0]).unwrap();
    let ln2_err = (predictive_entropy(&half) - std::f64::consts::LN_2).abs();
    let zero = predictive_entropy(&certain);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut exceed = 0;
    for _ in 0..100_000 {
        let k = rng.random_range(2..=12);
        let mut w: Vec<f64> = (0..k)
            .map(|_| if rng.random_bool(0.2) { 0.0 } else { rng.random::<f64>().powi(3) })
            .collect();
        if w.iter().all(|&x| x == 0.0) {
            w[0] = 1.0;
        }
        let total: f64 = w.iter().sum();
        let p: Vec<f64> = w.iter().map(|x| x / total).collect();
        let d = PredictiveDistribution::new(vec![0.0; k], p).unwrap();
        let h = predictive_entropy(&d);
        if !(h >= 0.0 && h <= (k as f64).ln() + 1e-12) {
            exceed += 1;
        }
    }
    outcome(
        ln2_err <= 1e-12 && zero == 0.0 && exceed == 0,
        format!("|H(0.5,0.5) - ln 2| = {ln2_err:.1e}, H(1,0) = {zero}, {exceed} of 100000 fuzzed cases out of [0, ln k]"),
    )
}

/// Cells whose score is within 1e-9 of the best.
fn argmax_set(scores: &[f64]) -> Vec<usize> {
    let best = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (0..scores.len()).filter(|&i| best - scores[i] <= 1e-9).collect()
}

fn criterion_7() -> Outcome {
    let mut instances = 0;
    let mut mismatches = 0;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for side in [5usize, 6] {
        let field = FieldSpec::new(GridSpace::square(3.0, side).unwrap(), 1.0, 0.1, 0.05).unwrap();
        let prior = PriorSpec::for_field(&field);
        for atoms in 10..=25 {
            for _ in 0..25 {
                let samples: Vec<CircleModel> = (0..atoms).map(|_| prior.sample(&mut rng)).collect();
                let ensemble = PosteriorEnsemble::new(samples, 0.0).unwrap();
                let objective = nested_entropy::design::entropy_objective(&ensemble, &field);
                let entropy: Vec<f64> = field
                    .grid()
                    .cells()
                    .map(|c| nested_entropy::Objective::evaluate(&objective, c).unwrap())
                    .collect();
                let eu: Vec<f64> = field
                    .grid()
                    .cells()
                    .map(|c| {
                        expected_utility(&ensemble.samples, c, |m, cell| {
                            Ok(field.forward(m, cell)? > 0.55)
                        })
                        .unwrap()
                    })
                    .collect();
                if argmax_set(&entropy) != argmax_set(&eu) {
                    mismatches += 1;
                }
                instances += 1;
            }
        }
    }
    outcome(
        mismatches == 0,
        format!("{mismatches} of {instances} exhaustively enumerated instances disagree"),
    )
}

fn informative_log(field: &FieldSpec, truth: &CircleModel, seed: u64, count: usize) -> MeasurementLog {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut log = MeasurementLog::new();
    for _ in 0..count {
        let angle = rng.random_range(0.0..std::f64::consts::TAU);
        let dist = rng.random_range(0.0..2.5);
        let p = [truth.cx + dist * angle.cos(), truth.cy + dist * angle.sin()];
        let p = [p[0].clamp(-3.0, 3.0), p[1].clamp(-3.0, 3.0)];
        let cell = field.grid().locate(&p).unwrap();
        log.push(field.measure(truth, cell, &mut rng).unwrap());
    }
    log
}

fn criterion_8() -> Outcome {
    let field = FieldSpec::default();
    let prior = PriorSpec::for_field(&field);
    let truth = CircleModel::new(0.0, 0.0, 1.5);
    let mut recovered = 0;
    for seed in 0..20u64 {
        let log = informative_log(&field, &truth, 800 + seed, 30);
        let cfg = NestedSamplingConfig {
            seed,
            ..NestedSamplingConfig::default()
        };
        let post = nested_sampling_posterior(&log, &prior, &field, &cfg).unwrap();
        let s = post.summary();
        let ok = truth
            .as_array()
            .iter()
            .zip(s.means.iter().zip(s.std_devs))
            .all(|(t, (m, sd))| (t - m).abs() <= 5.0 * sd);
        if ok {
            recovered += 1;
        }
    }

    let cfg = NestedSamplingConfig {
        seed: 8,
        ..NestedSamplingConfig::default()
    };
    let post = nested_sampling_posterior(&MeasurementLog::new(), &prior, &field, &cfg).unwrap();
    let column = |f: fn(&CircleModel) -> f64| post.samples.iter().map(f).collect::<Vec<f64>>();
    let p_values = [
        ks_uniform_p(&column(|m| m.cx), prior.cx[0], prior.cx[1]),
        ks_uniform_p(&column(|m| m.cy), prior.cy[0], prior.cy[1]),
        ks_uniform_p(&column(|m| m.r), prior.r_min, prior.r_max),
    ];
    outcome(
        recovered >= 18 && p_values.iter().all(|&p| p > 0.01),
        format!("truth within 5 sd in {recovered}/20 seeds (>= 18); empty-log KS p-values {p_values:.3?} (> 0.01)"),
    )
}

fn criterion_9() -> Outcome {
    let field = FieldSpec::default();
    let prior = PriorSpec::for_field(&field);
    let mut contracted = 0;
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for seed in 0..10u64 {
        let truth = CircleModel::new(rng.random_range(-1.5..1.5), rng.random_range(-1.5..1.5), rng.random_range(0.6..1.4));
        let cfg = LoopConfig {
            cycles: 15,
            seed,
            ..LoopConfig::default()
        };
        let recs = run_autonomous_loop(&truth, &field, &prior, &cfg).expect("loop runs");
        let first = recs.first().unwrap().posterior.std_devs;
        let last = recs.last().unwrap().posterior.std_devs;
        if last.iter().zip(first).all(|(l, f)| *l < f) {
            contracted += 1;
        }
    }
    outcome(contracted >= 9, format!("posterior contracted in all parameters in {contracted}/10 runs (>= 9)"))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("1 compression efficiency on the 61x61 circle problem", criterion_1),
        ("2 correctness against brute force", criterion_2),
        ("3 success/CE trends in N", criterion_3),
        ("4 threshold monotonicity and sample conservation", criterion_4),
        ("5 memoization bound", criterion_5),
        ("6 entropy arithmetic", criterion_6),
        ("7 expected utility / entropy argmax equivalence", criterion_7),
        ("8 inference sanity", criterion_8),
        ("9 closed-loop contraction", criterion_9),
    ];
    let start = Instant::now();
    let mut failed = 0;
    for (name, check) in criteria {
        let t = Instant::now();
        let out = check();
        let tag = if out.pass { "PASS" } else { "FAIL" };
        println!("[{tag}] criterion {name} ({:.1}s): {}", t.elapsed().as_secs_f64(), out.detail);
        if !out.pass {
            failed += 1;
        }
    }
    println!("acceptance: {} of 9 criteria passed in {:.1}s", 9 - failed, start.elapsed().as_secs_f64());
    if failed > 0 {
        std::process::exit(1);
    }
}

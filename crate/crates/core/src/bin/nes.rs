//! Command-line front end.
//!
//! Exit codes: 0 success, 1 I/O or failed trend check, 2 invalid input,
//! 3 NES hit its iteration cap, 4 inference failure (partial output kept).

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};

use nested_entropy::circle::{MeasurementLog, WorldSpec};
use nested_entropy::design::{
    default_design_nes, entropy_objective, run_autonomous_loop_with, DesignPolicy, LoopConfig, NesSchedule, Searcher,
    Selector,
};
use nested_entropy::inference::{NestedSamplingConfig, PosteriorEnsemble, PriorSpec};
use nested_entropy::landscape::{brute_force_map, BruteForceMap, MixtureLandscape};
use nested_entropy::metrics::{benchmark_sweep, gaussian_family, SweepConfig};
use nested_entropy::search::{run_nes, write_trace_csv, NesConfig};
use nested_entropy::{Error, GridSpace};

#[derive(Parser)]
#[command(name = "nes", version, about = "Nested entropy sampling and autonomous experimental design")]
struct Cli {
    /// Overrides the seed of whatever the subcommand runs.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Gaussian-mixture test landscapes.
    #[command(subcommand)]
    Landscape(LandscapeCmd),
    /// Run NES on a landscape.
    #[command(subcommand)]
    Nes(NesCmd),
    /// Replicated benchmarks.
    #[command(subcommand)]
    Bench(BenchCmd),
    /// Simulated circle-finding robot.
    #[command(subcommand)]
    Robot(RobotCmd),
    /// Exhaustive maps.
    #[command(subcommand)]
    Map(MapCmd),
}

#[derive(Subcommand)]
enum LandscapeCmd {
    /// Draw a random landscape and print its brute-force argmax.
    Generate(GenerateArgs),
}

#[derive(Subcommand)]
enum NesCmd {
    /// Search a landscape file.
    Run(NesRunArgs),
}

#[derive(Subcommand)]
enum BenchCmd {
    /// Success probability and compression efficiency as a function of N.
    Sweep(SweepArgs),
}

#[derive(Subcommand)]
enum RobotCmd {
    /// Run the closed measure/infer/design loop against a hidden circle.
    Simulate(SimulateArgs),
}

#[derive(Subcommand)]
enum MapCmd {
    /// Evaluate every cell and write a dense CSV.
    BruteForce(MapArgs),
}

#[derive(Args, Clone)]
struct GridArgs {
    /// Half-width of the square domain.
    #[arg(long, default_value_t = 3.0)]
    half_width: f64,
    /// Cells per side.
    #[arg(long, default_value_t = 61)]
    cells: usize,
}

impl GridArgs {
    fn grid(&self) -> Result<GridSpace, Error> {
        GridSpace::square(self.half_width, self.cells)
    }
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long, default_value_t = 7)]
    components: usize,
    #[command(flatten)]
    grid: GridArgs,
    #[arg(long, default_value = "landscape.json")]
    out: PathBuf,
}

#[derive(Args)]
struct NesRunArgs {
    #[arg(long)]
    landscape: PathBuf,
    /// NES settings as JSON; missing fields take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the sample count of the config.
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Per-iteration CSV trace.
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long, value_delimiter = ',', default_value = "5,10,20,50,100")]
    n_values: Vec<usize>,
    #[arg(long, default_value_t = 100)]
    replicates: usize,
    #[arg(long, default_value_t = 7)]
    components: usize,
    #[command(flatten)]
    grid: GridArgs,
    /// NES template as JSON; sample count and seed are set per run.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    #[arg(long)]
    out_csv: Option<PathBuf>,
    #[arg(long)]
    out_json: Option<PathBuf>,
    /// Fail unless both trends are significant at p < 0.05.
    #[arg(long)]
    check_trend: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum SearcherKind {
    Brute,
    Nes,
    Both,
}

#[derive(Clone, Copy, ValueEnum)]
enum SelectorKind {
    /// Uniform among the optimal cells.
    Random,
    /// Optimal cell closest to the previous measurement.
    Nearest,
}

#[derive(Args)]
struct SimulateArgs {
    /// Hidden circle and field as JSON; defaults to the built-in world.
    #[arg(long)]
    world: Option<PathBuf>,
    #[arg(long, default_value_t = 15)]
    cycles: usize,
    #[arg(long, value_enum, default_value = "nes")]
    searcher: SearcherKind,
    #[arg(long)]
    nes_config: Option<PathBuf>,
    /// Nested-sampling settings as JSON.
    #[arg(long)]
    inference_config: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "random")]
    selector: SelectorKind,
    /// Independent NES runs per cycle.
    #[arg(long, default_value_t = 1)]
    nes_runs: usize,
    /// Allow re-measuring cells already visited.
    #[arg(long)]
    allow_repeats: bool,
    #[arg(long, default_value = "robot-out")]
    out: PathBuf,
}

#[derive(Args)]
struct MapArgs {
    /// Landscape JSON to map.
    #[arg(long, conflicts_with_all = ["ensemble", "world"])]
    landscape: Option<PathBuf>,
    /// Posterior ensemble JSON; the map is its predictive entropy.
    #[arg(long, requires = "world")]
    ensemble: Option<PathBuf>,
    #[arg(long)]
    world: Option<PathBuf>,
    /// Measurement CSV whose cells are excluded from the entropy map.
    #[arg(long, requires = "ensemble")]
    measurements: Option<PathBuf>,
    #[arg(long, default_value = "map.csv")]
    out: PathBuf,
}

enum Failure {
    Lib(Error),
    Usage(String),
    NotConverged,
    Trend(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Lib(Error::Io(e))
    }
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Lib(Error::Io(_)) | Failure::Trend(_) => 1,
            Failure::Lib(Error::Inference { .. }) => 4,
            Failure::Lib(_) | Failure::Usage(_) => 2,
            Failure::NotConverged => 3,
        }
    }
}

type CmdResult = Result<(), Failure>;

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    Ok(BufWriter::new(File::create(path)?))
}

fn print_map_summary(map: &BruteForceMap, grid: &GridSpace) -> Result<(), Failure> {
    println!("max {}", map.max_value);
    for &c in &map.argmax {
        println!("argmax cell {c} indices {:?} at {:?}", grid.indices(c)?, grid.center(c)?);
    }
    Ok(())
}

fn landscape_generate(args: GenerateArgs, seed: u64) -> CmdResult {
    let landscape = MixtureLandscape::random(args.components, args.grid.grid()?, seed)?;
    fs::write(&args.out, landscape.to_json()?)?;
    info!("wrote {}", args.out.display());
    let map = brute_force_map(&landscape, landscape.grid())?;
    print_map_summary(&map, landscape.grid())
}

fn nes_run(args: NesRunArgs, seed: Option<u64>) -> CmdResult {
    let landscape: MixtureLandscape = read_json(&args.landscape)?;
    let mut config = match &args.config {
        Some(p) => read_json::<NesConfig>(p)?,
        None => NesConfig::default(),
    };
    if let Some(n) = args.samples {
        config.num_samples = n;
    }
    if let Some(s) = seed {
        config.seed = s;
    }
    let res = run_nes(&landscape, landscape.grid(), &config)?;
    for &c in &res.optimal_cells {
        println!("optimal cell {c} indices {:?}", landscape.grid().indices(c)?);
    }
    println!(
        "h_max {} m {} CE {:.4} iterations {} converged {}",
        res.h_max, res.metrics.evaluations, res.metrics.compression_efficiency, res.metrics.iterations, res.converged
    );
    if let Some(p) = &args.out {
        fs::write(p, serde_json::to_string_pretty(&res).map_err(Error::from)?)?;
    }
    if let Some(p) = &args.trace {
        write_trace_csv(&res.trace, create(p)?)?;
    }
    if res.converged {
        Ok(())
    } else {
        Err(Failure::NotConverged)
    }
}

fn bench_sweep(args: SweepArgs, seed: u64) -> CmdResult {
    let nes = match &args.config {
        Some(p) => read_json::<NesConfig>(p)?,
        None => NesConfig::default(),
    };
    let config = SweepConfig {
        n_values: args.n_values,
        replicates: args.replicates,
        nes,
        seed,
        jobs: args.jobs,
    };
    let summary = benchmark_sweep(gaussian_family(args.components, args.grid.grid()?), &config)?;
    println!("N,mean_CE,success_probability,replicates");
    for r in &summary.records {
        println!("{},{},{},{}", r.num_samples, r.mean_ce, r.success_probability, r.replicates);
    }
    if let Some(p) = &args.out_csv {
        summary.write_csv(create(p)?)?;
    }
    if let Some(p) = &args.out_json {
        fs::write(p, summary.to_json()?)?;
    }
    if args.check_trend {
        let s = summary.success_trend();
        let ce = summary.ce_trend();
        println!("success trend rho {:.4} p {:.3e}", s.rho, s.p_value);
        println!("CE trend rho {:.4} p {:.3e}", ce.rho, ce.p_value);
        if !s.significant(0.05) || !ce.significant(0.05) {
            return Err(Failure::Trend("trend not significant at p < 0.05".into()));
        }
    }
    Ok(())
}

fn robot_simulate(args: SimulateArgs, seed_override: Option<u64>) -> CmdResult {
    let seed = seed_override.unwrap_or(0);
    let world: WorldSpec = match &args.world {
        Some(p) => read_json(p)?,
        None => WorldSpec::default(),
    };
    let (truth, field) = world.build()?;
    let prior = PriorSpec::for_field(&field);
    let mut nes = match &args.nes_config {
        Some(p) => read_json::<NesConfig>(p)?,
        None => default_design_nes(),
    };
    let mut inference = match &args.inference_config {
        Some(p) => read_json::<NestedSamplingConfig>(p)?,
        None => NestedSamplingConfig::default(),
    };
    if let Some(s) = seed_override {
        nes.seed = s;
        inference.seed = s;
    }
    let config = LoopConfig {
        policy: DesignPolicy {
            searcher: match args.searcher {
                SearcherKind::Brute => Searcher::BruteForce,
                SearcherKind::Nes => Searcher::Nes(nes),
                SearcherKind::Both => Searcher::Both(nes),
            },
            selector: match args.selector {
                SelectorKind::Random => Selector::RandomAmongOptima { seed },
                SelectorKind::Nearest => Selector::NearestToArm,
            },
        },
        inference,
        exclude_measured: !args.allow_repeats,
        schedule: NesSchedule {
            runs: args.nes_runs,
            ..NesSchedule::default()
        },
        cycles: args.cycles,
        seed,
        ..LoopConfig::default()
    };

    fs::create_dir_all(&args.out)?;
    let mut records = create(&args.out.join("loop.jsonl"))?;
    let mut write_error: Option<std::io::Error> = None;
    let mut last_ensemble: Option<PosteriorEnsemble> = None;
    let outcome = run_autonomous_loop_with(&truth, &field, &prior, &config, |out| {
        let r = &out.record;
        let mut line = format!(
            "cycle {:>3} cell {} at ({:.2}, {:.2}) h_max {:.4} CE {:.2}",
            r.cycle, r.chosen_cell, r.chosen_location[0], r.chosen_location[1], r.h_max, r.metrics.compression_efficiency
        );
        if let Some(c) = &r.comparison {
            line += &format!(
                " | brute force h_max {:.4} CE {:.2} agree {}",
                c.brute_force_h_max, c.brute_force_metrics.compression_efficiency, c.agree
            );
        }
        println!("{line}");
        last_ensemble = Some(out.ensemble.clone());
        let written = serde_json::to_string(r)
            .map_err(std::io::Error::from)
            .and_then(|s| writeln!(records, "{s}"))
            .and_then(|_| records.flush())
            .and_then(|_| match &out.map {
                Some(map) => {
                    let path = args.out.join(format!("entropy_cycle_{:03}.csv", r.cycle));
                    map.write_dense_csv(field.grid(), File::create(path)?)
                        .map_err(std::io::Error::other)
                }
                None => Ok(()),
            });
        if let Err(e) = written {
            write_error.get_or_insert(e);
        }
    });
    let (log, failure) = match outcome {
        Ok((_, log)) => (log, None),
        Err(f) => (f.log, Some(f.error)),
    };
    write_measurements(&args.out.join("measurements.csv"), &log, &field)?;
    if let Some(ens) = &last_ensemble {
        fs::write(args.out.join("posterior.json"), ens.to_json()?)?;
    }
    fs::write(args.out.join("world.json"), serde_json::to_string_pretty(&world).map_err(Error::from)?)?;
    if let Some(e) = write_error {
        return Err(e.into());
    }
    if let Some(e) = failure {
        warn!("loop stopped early; partial output kept in {}", args.out.display());
        return Err(e.into());
    }
    Ok(())
}

fn write_measurements(path: &Path, log: &MeasurementLog, field: &nested_entropy::circle::FieldSpec) -> CmdResult {
    log.write_csv(field, create(path)?)?;
    Ok(())
}

fn map_brute_force(args: MapArgs) -> CmdResult {
    let (map, grid) = if let Some(p) = &args.landscape {
        let landscape: MixtureLandscape = read_json(p)?;
        (brute_force_map(&landscape, landscape.grid())?, landscape.grid().clone())
    } else if let (Some(e), Some(w)) = (&args.ensemble, &args.world) {
        let ensemble: PosteriorEnsemble = read_json(e)?;
        let world: WorldSpec = read_json(w)?;
        let (_, field) = world.build()?;
        let log = match &args.measurements {
            Some(m) => MeasurementLog::read_csv(&field, File::open(m)?)?,
            None => MeasurementLog::new(),
        };
        let objective = entropy_objective(&ensemble, &field).excluding(log.iter().map(|m| m.location));
        (brute_force_map(&objective, field.grid())?, field.grid().clone())
    } else {
        return Err(Failure::Usage("pass --landscape, or --ensemble with --world".into()));
    };
    map.write_dense_csv(&grid, create(&args.out)?)?;
    print_map_summary(&map, &grid)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let seed = cli.seed;
    let result = match cli.command {
        Command::Landscape(LandscapeCmd::Generate(a)) => landscape_generate(a, seed.unwrap_or(0)),
        Command::Nes(NesCmd::Run(a)) => nes_run(a, seed),
        Command::Bench(BenchCmd::Sweep(a)) => bench_sweep(a, seed.unwrap_or(0)),
        Command::Robot(RobotCmd::Simulate(a)) => robot_simulate(a, seed),
        Command::Map(MapCmd::BruteForce(a)) => map_brute_force(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Lib(e) => eprintln!("error: {e}"),
                Failure::Usage(m) | Failure::Trend(m) => eprintln!("error: {m}"),
                Failure::NotConverged => eprintln!("error: NES stopped at the iteration cap without converging"),
            }
            ExitCode::from(f.code())
        }
    }
}

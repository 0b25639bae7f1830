use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use oob_bands::sim::run_grid;
use oob_bands::{build_forest, Forest, ForestConfig, ForestIntervals, IntervalKind, ResampleMode};

use crate::config::parse_config;
use crate::dataset::read_dataset;
use crate::results::{write_replicates, write_results, ResultRow};

/// Environment variable consulted when `--threads` is absent.
pub const THREADS_ENV: &str = "OOB_BANDS_THREADS";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    /// 1 for usage and configuration errors, 2 for failures while running.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

impl From<oob_bands::Error> for CliError {
    fn from(e: oob_bands::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "oob-bands",
    version,
    about = "Random-forest prediction intervals from out-of-bag residuals"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train a forest on a CSV dataset and save it as JSON.
    Fit(FitArgs),
    /// Compute a prediction interval at one query point.
    Interval(IntervalArgs),
    /// Run a coverage simulation described by a TOML document.
    Simulate(SimulateArgs),
}

#[derive(Debug, Args)]
struct FitArgs {
    /// Training data: header row, numeric columns, response last.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 500, value_parser = clap::value_parser!(u64).range(1..))]
    trees: u64,
    /// Candidate features per split [default: max(1, p/3)].
    #[arg(long)]
    mtry: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 5)]
    min_node_size: usize,
    /// bootstrap or subsample.
    #[arg(long, default_value = "bootstrap")]
    resample: ResampleMode,
    /// Rows drawn per tree [default: n].
    #[arg(long)]
    sample_size: Option<usize>,
    #[arg(long)]
    max_leaves: Option<usize>,
    /// Where to write the model.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct IntervalArgs {
    #[arg(long)]
    model: PathBuf,
    /// The training data the model was fitted on.
    #[arg(long)]
    data: PathBuf,
    /// Query point as comma-separated reals.
    #[arg(long, allow_hyphen_values = true)]
    x: String,
    /// Miscoverage level, strictly between 0 and 1.
    #[arg(long, default_value_t = 0.05, value_parser = parse_alpha)]
    alpha: f64,
    /// prf, prf-mcor, prf-w, np-eq or qrf.
    #[arg(long, default_value = "prf", value_parser = parse_forest_kind)]
    method: IntervalKind,
    /// Mixing weight of the weighted variance estimate, in (0, 1).
    #[arg(long, default_value_t = 0.5)]
    lambda: f64,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// TOML run document.
    #[arg(long)]
    config: PathBuf,
    /// Summary CSV [default: `output` from the document].
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads [default: `threads` from the document, then $OOB_BANDS_THREADS, then all cores].
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    threads: Option<u64>,
    /// Master seed, overriding the document.
    #[arg(long)]
    seed: Option<u64>,
    /// Also write every evaluated interval to this CSV.
    #[arg(long)]
    replicates: Option<PathBuf>,
}

fn parse_alpha(s: &str) -> Result<f64, String> {
    let a: f64 = s.parse().map_err(|_| format!("`{s}` is not a number"))?;
    if a > 0.0 && a < 1.0 {
        Ok(a)
    } else {
        Err(format!("alpha must satisfy 0 < alpha < 1, got {s}"))
    }
}

fn parse_forest_kind(s: &str) -> Result<IntervalKind, String> {
    let kind: IntervalKind = s.parse().map_err(|e: oob_bands::Error| e.to_string())?;
    if IntervalKind::FOREST.contains(&kind) {
        Ok(kind)
    } else {
        Err(format!(
            "`{s}` is not a forest interval method (use prf, prf-mcor, prf-w, np-eq or qrf)"
        ))
    }
}

fn parse_point(s: &str) -> Result<Vec<f64>, CliError> {
    s.split(',')
        .map(|t| {
            let t = t.trim();
            t.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| CliError::Usage(format!("--x: `{t}` is not a finite real")))
        })
        .collect()
}

/// Parses `args` (program name first) and runs the command, writing command
/// output to `out` and diagnostics to stderr. Returns the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).try_init();
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return code;
        }
    };
    let result = match cli.command {
        Command::Fit(a) => fit(a),
        Command::Interval(a) => interval(a, out),
        Command::Simulate(a) => simulate(a),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Entry point used by the binary.
pub fn cli_main<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    run(args, &mut lock)
}

fn fit(a: FitArgs) -> Result<(), CliError> {
    let data = read_dataset(&a.data)?;
    let mut config = ForestConfig::default()
        .with_trees(a.trees as usize)
        .with_seed(a.seed)
        .with_min_node_size(a.min_node_size)
        .with_resample(a.resample, a.sample_size)
        .with_max_leaves(a.max_leaves);
    if let Some(m) = a.mtry {
        config = config.with_mtry(m);
    }
    config
        .resolve(data.n_samples(), data.n_features())
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let forest = build_forest(&data, &config)?;
    std::fs::write(&a.out, forest.to_json()?).map_err(|e| CliError::Runtime(format!("{}: {e}", a.out.display())))
}

fn interval(a: IntervalArgs, out: &mut dyn Write) -> Result<(), CliError> {
    if !(a.lambda > 0.0 && a.lambda < 1.0) {
        return Err(CliError::Usage(format!(
            "--lambda must satisfy 0 < lambda < 1, got {}",
            a.lambda
        )));
    }
    let x = parse_point(&a.x)?;
    let text =
        std::fs::read_to_string(&a.model).map_err(|e| CliError::Runtime(format!("{}: {e}", a.model.display())))?;
    let forest = Forest::from_json(&text)?;
    let data = read_dataset(&a.data)?;
    if x.len() != forest.n_features() {
        return Err(CliError::Usage(format!(
            "--x has {} coordinates but the model expects {}",
            x.len(),
            forest.n_features()
        )));
    }
    let fitted = ForestIntervals::new(forest, &data, a.lambda)?;
    let iv = fitted.interval(a.method, &data, &x, a.alpha)?;
    writeln!(out, "{},{},{}", iv.lower, iv.upper, iv.point).map_err(|e| CliError::Runtime(e.to_string()))
}

fn thread_count(flag: Option<u64>, document: Option<usize>) -> Result<Option<usize>, CliError> {
    if let Some(t) = flag {
        return Ok(Some(t as usize));
    }
    if document.is_some() {
        return Ok(document);
    }
    match std::env::var(THREADS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(t) if t > 0 => Ok(Some(t)),
            _ => Err(CliError::Usage(format!(
                "{THREADS_ENV} must be a positive integer, got `{v}`"
            ))),
        },
        Err(_) => Ok(None),
    }
}

fn simulate(a: SimulateArgs) -> Result<(), CliError> {
    let mut cfg = parse_config(&a.config)?;
    let output: PathBuf = a
        .out
        .or(cfg.output.clone())
        .ok_or_else(|| CliError::Usage("no output path: pass --out or set `output` in the document".into()))?;
    let replicates = a.replicates.or(cfg.replicates.clone());
    if replicates.is_some() {
        for s in &mut cfg.scenarios {
            s.keep_records = true;
        }
    }
    let seed = a.seed.or(cfg.seed).unwrap_or(0);
    let threads = thread_count(a.threads, cfg.threads)?;

    let started = Instant::now();
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = threads {
        builder = builder.num_threads(t);
    }
    let pool = builder.build().map_err(|e| CliError::Runtime(e.to_string()))?;
    let outcome = pool.install(|| run_grid(&cfg.scenarios, seed));
    log::info!(
        "{} scenarios on {} threads in {:.1?}",
        cfg.scenarios.len(),
        pool.current_num_threads(),
        started.elapsed()
    );

    let rows: Vec<ResultRow> = outcome
        .reports
        .iter()
        .flat_map(|r| {
            let scenario = cfg
                .scenarios
                .iter()
                .find(|s| s.id == r.scenario_id)
                .expect("ids are unique");
            ResultRow::from_report(scenario, r)
        })
        .collect();
    write_results(&rows, &output)?;
    if let Some(path) = &replicates {
        write_replicates(&outcome.reports, path)?;
    }
    if outcome.failures.is_empty() {
        return Ok(());
    }
    for (id, e) in &outcome.failures {
        log::error!("scenario {id} failed: {e}");
    }
    Err(CliError::Runtime(format!(
        "{} of {} scenarios failed; see the log for details",
        outcome.failures.len(),
        cfg.scenarios.len()
    )))
}

//! Command-line flags and their config-file mirror.
//!
//! Every subcommand's flags double as a table in the TOML config file, keyed
//! by the subcommand name. A flag given on the command line wins over the
//! same key in the file.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use collusion_core::analysis::DeviationMethod;
use collusion_core::experiment::Family;
use serde::Deserialize;

use crate::error::{CliError, CliResult};

pub const THREADS_ENV: &str = "COLLUSION_THREADS";

#[derive(Debug, Parser)]
#[command(name = "collusion", version, about = "Cournot duopoly benchmarks and Q-learning collusion experiments")]
pub struct Cli {
    /// TOML config file with one table per subcommand.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Worker threads; defaults to $COLLUSION_THREADS, then one per core.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Closed-form and bargaining benchmarks for every parameter set.
    Benchmarks(BenchmarksArgs),
    /// Sampled Pareto frontier of one parameter set.
    Frontier(FrontierArgs),
    /// Run a Q-learning experiment and persist it to a directory.
    Simulate(SimulateArgs),
    /// Fit distances between a simulation and each benchmark.
    Analyze(AnalyzeArgs),
    /// One-shot deviation test on the converged Q-matrices.
    Deviate(DeviateArgs),
    /// Plot-ready CSV data for every figure panel.
    Figures(FiguresArgs),
}

fn parse_family(s: &str) -> Result<Family, String> {
    Family::parse(s).ok_or_else(|| format!("unknown parameter family `{s}` (expected main or alt)"))
}

fn parse_method(s: &str) -> Result<DeviationMethod, String> {
    DeviationMethod::parse(s)
        .ok_or_else(|| format!("unknown deviation method `{s}` (expected best_response or qvalue)"))
}

/// How the min-max disagreement point of the bargaining benchmarks is found.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MinmaxMode {
    /// Best response over continuous quantities.
    #[default]
    Continuous,
    /// Best response over the learners' action grid.
    Grid,
}

fn parse_minmax(s: &str) -> Result<MinmaxMode, String> {
    match s {
        "continuous" => Ok(MinmaxMode::Continuous),
        "grid" => Ok(MinmaxMode::Grid),
        _ => Err(format!("unknown min-max mode `{s}` (expected continuous or grid)")),
    }
}

trait Merge {
    fn merge(self, file: Self) -> Self;
}

macro_rules! mergeable {
    ($ty:ty { $($field:ident),* $(,)? }) => {
        impl Merge for $ty {
            fn merge(self, file: Self) -> Self {
                Self { $($field: self.$field.or(file.$field)),* }
            }
        }
    };
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarksArgs {
    /// Parameter family: main or alt.
    #[arg(long = "set", value_parser = parse_family)]
    #[serde(rename = "set")]
    pub family: Option<Family>,

    /// Output directory; the benchmark table goes to stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,

    /// Min-max disagreement over continuous quantities or the action grid.
    #[arg(long, value_parser = parse_minmax)]
    pub minmax: Option<MinmaxMode>,
}
mergeable!(BenchmarksArgs { family, out, minmax });

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrontierArgs {
    /// Parameter set name, e.g. sym or asym3.
    #[arg(long)]
    pub spec: Option<String>,

    #[arg(long)]
    pub samples: Option<usize>,

    /// Parameter family: main or alt.
    #[arg(long = "set", value_parser = parse_family)]
    #[serde(rename = "set")]
    pub family: Option<Family>,

    /// Output CSV; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,

    #[arg(long, value_parser = parse_minmax)]
    pub minmax: Option<MinmaxMode>,
}
mergeable!(FrontierArgs { spec, samples, family, out, minmax });

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateArgs {
    /// Parameter family: main or alt.
    #[arg(long = "set", value_parser = parse_family)]
    #[serde(rename = "set")]
    pub family: Option<Family>,

    /// Restrict the run to these parameter sets.
    #[arg(long, value_delimiter = ',')]
    pub only: Option<Vec<String>>,

    /// Memory length in periods.
    #[arg(long)]
    pub k: Option<usize>,

    #[arg(long)]
    pub alpha: Option<f64>,

    /// Exploration intensity; converted to the decay rate beta.
    #[arg(long, conflicts_with = "beta")]
    pub nu: Option<f64>,

    /// Exploration decay rate.
    #[arg(long)]
    pub beta: Option<f64>,

    #[arg(long)]
    pub delta: Option<f64>,

    #[arg(long)]
    pub runs: Option<usize>,

    #[arg(long)]
    pub seed: Option<u64>,

    #[arg(long)]
    pub max_periods: Option<u64>,

    #[arg(long)]
    pub convergence_window: Option<u64>,

    #[arg(long)]
    pub post_rounds: Option<usize>,

    /// Write final Q-matrices (needed by `deviate` and `figures`).
    #[arg(long, value_name = "BOOL")]
    pub keep_q: Option<bool>,

    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl Merge for SimulateArgs {
    fn merge(self, file: Self) -> Self {
        // nu and beta are alternatives; a flag for either replaces both file keys
        let (nu, beta) = if self.nu.is_some() || self.beta.is_some() {
            (self.nu, self.beta)
        } else {
            (file.nu, file.beta)
        };
        Self {
            family: self.family.or(file.family),
            only: self.only.or(file.only),
            k: self.k.or(file.k),
            alpha: self.alpha.or(file.alpha),
            nu,
            beta,
            delta: self.delta.or(file.delta),
            runs: self.runs.or(file.runs),
            seed: self.seed.or(file.seed),
            max_periods: self.max_periods.or(file.max_periods),
            convergence_window: self.convergence_window.or(file.convergence_window),
            post_rounds: self.post_rounds.or(file.post_rounds),
            keep_q: self.keep_q.or(file.keep_q),
            out: self.out.or(file.out),
        }
    }
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalyzeArgs {
    /// Simulation directory written by `simulate`.
    #[arg(long)]
    pub sim: Option<PathBuf>,

    /// Distance table; the normalized table is written next to it with a
    /// `_normalized` suffix.
    #[arg(long)]
    pub out: Option<PathBuf>,
}
mergeable!(AnalyzeArgs { sim, out });

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviateArgs {
    #[arg(long)]
    pub sim: Option<PathBuf>,

    /// best_response or qvalue.
    #[arg(long, value_parser = parse_method)]
    pub method: Option<DeviationMethod>,

    #[arg(long)]
    pub out: Option<PathBuf>,

    /// Optional per-run verdict table.
    #[arg(long)]
    pub runs_out: Option<PathBuf>,
}
mergeable!(DeviateArgs { sim, method, out, runs_out });

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FiguresArgs {
    #[arg(long)]
    pub sim: Option<PathBuf>,

    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,

    /// Frontier samples per parameter set in the pareto panel.
    #[arg(long)]
    pub samples: Option<usize>,
}
mergeable!(FiguresArgs { sim, out, samples });

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    threads: Option<usize>,
    benchmarks: Option<BenchmarksArgs>,
    frontier: Option<FrontierArgs>,
    simulate: Option<SimulateArgs>,
    analyze: Option<AnalyzeArgs>,
    deviate: Option<DeviateArgs>,
    figures: Option<FiguresArgs>,
}

fn load_config(path: &Path) -> CliResult<ConfigFile> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Input(format!("cannot read config {}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))
}

/// Resolved invocation: flags merged over the config file.
#[derive(Debug)]
pub struct Invocation {
    pub threads: Option<usize>,
    pub command: Command,
}

fn merged<T: Merge + Default>(flags: T, file: Option<T>) -> T {
    flags.merge(file.unwrap_or_default())
}

pub fn resolve(cli: Cli) -> CliResult<Invocation> {
    let file = match &cli.config {
        Some(path) => load_config(path)?,
        None => ConfigFile::default(),
    };
    let env_threads = match std::env::var(THREADS_ENV) {
        Ok(v) if !v.trim().is_empty() => Some(
            v.trim()
                .parse::<usize>()
                .map_err(|_| CliError::Usage(format!("{THREADS_ENV}={v} is not a thread count")))?,
        ),
        _ => None,
    };
    let threads = cli.threads.or(file.threads).or(env_threads);
    if threads == Some(0) {
        return Err(CliError::Usage("thread count must be at least 1".into()));
    }
    let command = match cli.command {
        Command::Benchmarks(a) => Command::Benchmarks(merged(a, file.benchmarks)),
        Command::Frontier(a) => Command::Frontier(merged(a, file.frontier)),
        Command::Simulate(a) => Command::Simulate(merged(a, file.simulate)),
        Command::Analyze(a) => Command::Analyze(merged(a, file.analyze)),
        Command::Deviate(a) => Command::Deviate(merged(a, file.deviate)),
        Command::Figures(a) => Command::Figures(merged(a, file.figures)),
    };
    Ok(Invocation { threads, command })
}

pub fn required<T>(value: Option<T>, flag: &str) -> CliResult<T> {
    value.ok_or_else(|| CliError::Usage(format!("missing required option --{flag}")))
}

//! Command-line driver for the private dynamic pricing simulator.
//!
//! `run` executes one experiment described by flags and/or a JSON config
//! file (flags win); the `table1`/`table2`/`table3`/`surplus` subcommands
//! regenerate the benchmark grids. Outputs are tidy CSV, summary JSON, and a
//! small static SVG chart per experiment.

mod drivers;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use dp_pricer_core::harness::{ExperimentConfig, Preset, Variant};
use dp_pricer_core::policy::UcbObjective;

use drivers::{DynError, GridParams};

#[derive(Parser)]
#[command(
    name = "dp-pricer",
    version,
    about = "Differentially private dynamic pricing simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment (flags and/or --config; flags override the file).
    Run(Box<RunArgs>),
    /// Regret vs the non-private baseline across (T, d) and ε.
    Table1(GridArgs),
    /// Stage-budget sensitivity: fix ε₁ (then ε₂) and sweep the other.
    Table2(Table2Args),
    /// Release-based pipeline vs input perturbation across horizons.
    Table3(GridArgs),
    /// Consumer surplus vs ε with the non-private reference.
    Surplus(GridArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum PresetArg {
    Section8,
    Theorem1,
    Theorem2,
}

#[derive(Clone, Copy, ValueEnum)]
enum VariantArg {
    Dp,
    Nonprivate,
    InputPerturb,
    RandomPrice,
}

#[derive(Clone, Copy, ValueEnum)]
enum UcbArg {
    RevenueCap,
    PriceScaledCap,
}

#[derive(Args)]
struct RunArgs {
    /// JSON config mirroring the library's ExperimentConfig; missing fields
    /// take their defaults and explicit flags override file values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Policy preset (exploration length, ρ, γ, refresh cap).
    #[arg(long, value_enum)]
    preset: Option<PresetArg>,
    /// Horizon: pricing periods per trial.
    #[arg(long = "T")]
    horizon: Option<u64>,
    /// Feature dimension (contexts have d−1 coordinates).
    #[arg(long)]
    d: Option<usize>,
    /// Covariance-release budget ε₁.
    #[arg(long)]
    eps1: Option<f64>,
    /// Covariance-release budget δ₁.
    #[arg(long)]
    delta1: Option<f64>,
    /// Estimator budget ε₂.
    #[arg(long)]
    eps2: Option<f64>,
    /// Estimator budget δ₂.
    #[arg(long)]
    delta2: Option<f64>,
    /// Pricing mechanism to exercise.
    #[arg(long, value_enum)]
    variant: Option<VariantArg>,
    /// Record-anonymization budget for --variant input-perturb (defaults to
    /// the effective ε₁).
    #[arg(long)]
    ip_eps: Option<f64>,
    /// Independent trials to aggregate.
    #[arg(long)]
    trials: Option<u32>,
    /// Base seed; trial i uses seed + i. DP_PRICER_SEED overrides.
    #[arg(long)]
    seed: Option<u64>,
    /// Number of candidate prices in [0, 1].
    #[arg(long)]
    grid: Option<usize>,
    /// Dense-grid resolution of the regret oracle.
    #[arg(long)]
    oracle_grid: Option<usize>,
    /// Worker threads for trial parallelism (0 = library default).
    #[arg(long)]
    jobs: Option<usize>,
    /// Index shape of the price rule.
    #[arg(long, value_enum)]
    ucb: Option<UcbArg>,
    /// Write trial 0's per-period trace as CSV.
    #[arg(long)]
    out_csv: Option<PathBuf>,
    /// Write the aggregate summary as JSON.
    #[arg(long)]
    out_summary: Option<PathBuf>,
    /// Write the mean average-regret curve as a static SVG chart.
    #[arg(long)]
    out_svg: Option<PathBuf>,
}

#[derive(Args)]
struct GridArgs {
    /// Comma-separated horizons (default: the grid's own values).
    #[arg(long, value_delimiter = ',')]
    horizons: Option<Vec<u64>>,
    /// Comma-separated feature dimensions.
    #[arg(long, value_delimiter = ',')]
    dims: Option<Vec<usize>>,
    /// Comma-separated ε values for the sweep axis.
    #[arg(long, value_delimiter = ',')]
    eps: Option<Vec<f64>>,
    /// Trials per cell.
    #[arg(long, default_value_t = 20)]
    trials: u32,
    /// Base seed; DP_PRICER_SEED overrides.
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Worker threads per cell (0 = library default).
    #[arg(long, default_value_t = 0)]
    jobs: usize,
    /// Output directory (default out/<subcommand>).
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct Table2Args {
    #[command(flatten)]
    grid: GridArgs,
    /// Value the non-swept stage budget is pinned at.
    #[arg(long, default_value_t = 0.1)]
    fixed: f64,
}

fn main() -> ExitCode {
    env_logger::init();
    match real_main() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn real_main() -> Result<(), DynError> {
    match Cli::parse().command {
        Command::Run(args) => {
            let cfg = build_config(&args)?;
            drivers::run_single(
                &cfg,
                args.out_csv.as_deref(),
                args.out_summary.as_deref(),
                args.out_svg.as_deref(),
            )
        }
        Command::Table1(a) => {
            let grid = drivers::table1(
                &grid_params(&a)?,
                &a.horizons.clone().unwrap_or_else(|| vec![100_000, 1_000_000]),
                &a.dims.clone().unwrap_or_else(|| vec![2, 3]),
                &a.eps.clone().unwrap_or_else(|| vec![0.1, 0.2, 0.5, 1.0, 5.0]),
            );
            drivers::run_grid(&grid, &out_dir(&a, grid.name))
        }
        Command::Table2(t) => {
            let a = &t.grid;
            let grid = drivers::table2(
                &grid_params(a)?,
                &a.horizons.clone().unwrap_or_else(|| vec![100_000]),
                &a.dims.clone().unwrap_or_else(|| vec![2, 3]),
                &a.eps.clone().unwrap_or_else(|| vec![0.02, 0.05, 0.1, 0.2, 0.5]),
                t.fixed,
            );
            drivers::run_grid(&grid, &out_dir(a, grid.name))
        }
        Command::Table3(a) => {
            let grid = drivers::table3(
                &grid_params(&a)?,
                &a.horizons.clone().unwrap_or_else(|| vec![100_000, 500_000, 1_000_000]),
                &a.dims.clone().unwrap_or_else(|| vec![2]),
                &a.eps.clone().unwrap_or_else(|| vec![0.2, 0.5, 1.0]),
            );
            drivers::run_grid(&grid, &out_dir(&a, grid.name))
        }
        Command::Surplus(a) => {
            let grid = drivers::surplus(
                &grid_params(&a)?,
                &a.horizons.clone().unwrap_or_else(|| vec![100_000]),
                &a.dims.clone().unwrap_or_else(|| vec![2]),
                &a.eps.clone().unwrap_or_else(|| vec![0.1, 0.2, 0.5, 1.0]),
            );
            drivers::run_grid(&grid, &out_dir(&a, grid.name))
        }
    }
}

/// Seed override from the environment, applied after flags so it wins.
fn env_seed() -> Result<Option<u64>, DynError> {
    match std::env::var("DP_PRICER_SEED") {
        Ok(s) => {
            let seed = s
                .trim()
                .parse::<u64>()
                .map_err(|e| format!("DP_PRICER_SEED {s:?}: {e}"))?;
            Ok(Some(seed))
        }
        Err(_) => Ok(None),
    }
}

fn grid_params(a: &GridArgs) -> Result<GridParams, DynError> {
    let seed = env_seed()?.unwrap_or(a.seed);
    Ok(GridParams { trials: a.trials, seed, jobs: a.jobs })
}

fn out_dir(a: &GridArgs, name: &str) -> PathBuf {
    a.out_dir.clone().unwrap_or_else(|| PathBuf::from("out").join(name))
}

fn build_config(args: &RunArgs) -> Result<ExperimentConfig, DynError> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| format!("read {}: {e}", path.display()))?;
            serde_json::from_str::<ExperimentConfig>(&text)
                .map_err(|e| format!("parse {}: {e}", path.display()))?
        }
        None => ExperimentConfig::default(),
    };
    if let Some(p) = args.preset {
        cfg.preset = match p {
            PresetArg::Section8 => Preset::Section8,
            PresetArg::Theorem1 => Preset::Theorem1,
            PresetArg::Theorem2 => Preset::Theorem2,
        };
    }
    if let Some(t) = args.horizon {
        cfg.horizon = t;
    }
    if let Some(d) = args.d {
        cfg.d = d;
    }
    if let Some(e) = args.eps1 {
        cfg.eps1 = e;
    }
    if let Some(d) = args.delta1 {
        cfg.delta1 = d;
    }
    if let Some(e) = args.eps2 {
        cfg.eps2 = e;
    }
    if let Some(d) = args.delta2 {
        cfg.delta2 = d;
    }
    if let Some(v) = args.variant {
        cfg.variant = match v {
            VariantArg::Dp => Variant::Dp,
            VariantArg::Nonprivate => Variant::Nonprivate,
            VariantArg::InputPerturb => {
                Variant::InputPerturb { eps: args.ip_eps.unwrap_or(cfg.eps1) }
            }
            VariantArg::RandomPrice => Variant::RandomPrice,
        };
    } else if let (Some(ip), Variant::InputPerturb { .. }) = (args.ip_eps, cfg.variant) {
        cfg.variant = Variant::InputPerturb { eps: ip };
    }
    if let Some(t) = args.trials {
        cfg.trials = t;
    }
    if let Some(s) = args.seed {
        cfg.base_seed = s;
    }
    if let Some(g) = args.grid {
        cfg.price_grid = g;
    }
    if let Some(g) = args.oracle_grid {
        cfg.oracle_grid = g;
    }
    if let Some(j) = args.jobs {
        cfg.jobs = j;
    }
    if let Some(u) = args.ucb {
        cfg.ucb = match u {
            UcbArg::RevenueCap => UcbObjective::RevenueCap,
            UcbArg::PriceScaledCap => UcbObjective::PriceScaledCap,
        };
    }
    if let Some(seed) = env_seed()? {
        cfg.base_seed = seed;
    }
    Ok(cfg)
}

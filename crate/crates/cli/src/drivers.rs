//! Experiment drivers behind the subcommands: build cell configs for each
//! benchmark grid, run them, and write the CSV / summary-JSON / SVG outputs.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::Instant;

use dp_pricer_core::harness::{self, ExperimentConfig, ExperimentReport, Variant};

use crate::svg::{self, Series};

pub type DynError = Box<dyn std::error::Error>;

/// Shared knobs of every grid subcommand.
pub struct GridParams {
    pub trials: u32,
    pub seed: u64,
    pub jobs: usize,
}

/// Which aggregate a grid reports in its matrix and chart.
#[derive(Clone, Copy, PartialEq)]
pub enum Metric {
    AvgRegret,
    AvgSurplus,
}

/// One experiment in a grid. `x` is the sweep coordinate used for charting;
/// baseline columns carry NaN and render as dashed horizontal lines.
pub struct Cell {
    pub row: String,
    pub col: String,
    pub x: f64,
    pub cfg: ExperimentConfig,
}

pub struct Grid {
    pub name: &'static str,
    pub title: String,
    pub metric: Metric,
    pub cells: Vec<Cell>,
}

fn delta_for(horizon: u64) -> f64 {
    (horizon as f64).powi(-2)
}

fn variant_label(variant: Variant) -> String {
    match variant {
        Variant::Dp => "dp".to_string(),
        Variant::Nonprivate => "nonprivate".to_string(),
        Variant::InputPerturb { eps } => format!("input_perturb({eps})"),
        Variant::RandomPrice => "random_price".to_string(),
    }
}

fn slug(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        if c.is_ascii_alphanumeric() || c == '.' {
            out.push(c.to_ascii_lowercase());
        } else if !out.ends_with('-') {
            out.push('-');
        }
    }
    out.trim_matches('-').to_string()
}

fn metric_of(metric: Metric, report: &ExperimentReport) -> f64 {
    match metric {
        Metric::AvgRegret => report.regret.mean,
        Metric::AvgSurplus => report.surplus.mean,
    }
}

fn metric_display(metric: Metric, value: f64) -> String {
    match metric {
        Metric::AvgRegret => format!("{:.1}", value * 1e4),
        Metric::AvgSurplus => format!("{value:.4}"),
    }
}

// ---------------------------------------------------------------------------
// Grid builders. Defaults reproduce the benchmark grids; every axis can be
// trimmed from the command line for cheaper runs.

/// Private pipeline at ε ∈ {0.1, …, 5} vs the non-private baseline, across
/// (T, d).
pub fn table1(p: &GridParams, horizons: &[u64], dims: &[usize], eps: &[f64]) -> Grid {
    let mut cells = Vec::new();
    for &t in horizons {
        for &d in dims {
            let row = format!("T={t} d={d}");
            let base = ExperimentConfig {
                horizon: t,
                d,
                trials: p.trials,
                base_seed: p.seed,
                delta1: delta_for(t),
                delta2: delta_for(t),
                jobs: p.jobs,
                ..ExperimentConfig::default()
            };
            for &e in eps {
                cells.push(Cell {
                    row: row.clone(),
                    col: format!("eps={e}"),
                    x: e,
                    cfg: ExperimentConfig { eps1: e, eps2: e, ..base.clone() },
                });
            }
            cells.push(Cell {
                row,
                col: "non-private".to_string(),
                x: f64::NAN,
                cfg: ExperimentConfig { variant: Variant::Nonprivate, ..base },
            });
        }
    }
    Grid {
        name: "table1",
        title: "Average regret vs privacy budget".to_string(),
        metric: Metric::AvgRegret,
        cells,
    }
}

/// Sensitivity to the two stage budgets: one of (ε₁, ε₂) pinned at `fixed`
/// while the other sweeps.
pub fn table2(
    p: &GridParams,
    horizons: &[u64],
    dims: &[usize],
    sweep: &[f64],
    fixed: f64,
) -> Grid {
    let mut cells = Vec::new();
    for &t in horizons {
        for &d in dims {
            let base = ExperimentConfig {
                horizon: t,
                d,
                trials: p.trials,
                base_seed: p.seed,
                delta1: delta_for(t),
                delta2: delta_for(t),
                jobs: p.jobs,
                ..ExperimentConfig::default()
            };
            for &e in sweep {
                cells.push(Cell {
                    row: format!("T={t} d={d} fix eps1={fixed}"),
                    col: format!("eps={e}"),
                    x: e,
                    cfg: ExperimentConfig { eps1: fixed, eps2: e, ..base.clone() },
                });
            }
            for &e in sweep {
                cells.push(Cell {
                    row: format!("T={t} d={d} fix eps2={fixed}"),
                    col: format!("eps={e}"),
                    x: e,
                    cfg: ExperimentConfig { eps1: e, eps2: fixed, ..base.clone() },
                });
            }
        }
    }
    Grid {
        name: "table2",
        title: format!("Stage-budget sensitivity (other budget fixed at {fixed})"),
        metric: Metric::AvgRegret,
        cells,
    }
}

/// Release-based pipeline vs input perturbation across horizons.
pub fn table3(p: &GridParams, horizons: &[u64], dims: &[usize], eps: &[f64]) -> Grid {
    let mut cells = Vec::new();
    for &t in horizons {
        for &d in dims {
            let base = ExperimentConfig {
                horizon: t,
                d,
                trials: p.trials,
                base_seed: p.seed,
                delta1: delta_for(t),
                delta2: delta_for(t),
                jobs: p.jobs,
                ..ExperimentConfig::default()
            };
            for &e in eps {
                cells.push(Cell {
                    row: format!("T={t} d={d} pipeline"),
                    col: format!("eps={e}"),
                    x: e,
                    cfg: ExperimentConfig { eps1: e, eps2: e, ..base.clone() },
                });
            }
            for &e in eps {
                cells.push(Cell {
                    row: format!("T={t} d={d} input-perturbation"),
                    col: format!("eps={e}"),
                    x: e,
                    cfg: ExperimentConfig {
                        variant: Variant::InputPerturb { eps: e },
                        ..base.clone()
                    },
                });
            }
        }
    }
    Grid {
        name: "table3",
        title: "Pipeline vs input perturbation".to_string(),
        metric: Metric::AvgRegret,
        cells,
    }
}

/// Consumer surplus under tightening budgets, with the non-private policy as
/// the reference line.
pub fn surplus(p: &GridParams, horizons: &[u64], dims: &[usize], eps: &[f64]) -> Grid {
    let mut cells = Vec::new();
    for &t in horizons {
        for &d in dims {
            let row = format!("T={t} d={d}");
            let base = ExperimentConfig {
                horizon: t,
                d,
                trials: p.trials,
                base_seed: p.seed,
                delta1: delta_for(t),
                delta2: delta_for(t),
                jobs: p.jobs,
                ..ExperimentConfig::default()
            };
            for &e in eps {
                cells.push(Cell {
                    row: row.clone(),
                    col: format!("eps={e}"),
                    x: e,
                    cfg: ExperimentConfig { eps1: e, eps2: e, ..base.clone() },
                });
            }
            cells.push(Cell {
                row,
                col: "non-private".to_string(),
                x: f64::NAN,
                cfg: ExperimentConfig { variant: Variant::Nonprivate, ..base },
            });
        }
    }
    Grid {
        name: "surplus",
        title: "Average consumer surplus vs privacy budget".to_string(),
        metric: Metric::AvgSurplus,
        cells,
    }
}

// ---------------------------------------------------------------------------
// Execution and outputs.

/// Runs every cell in order, prints the result matrix, and writes
/// `<name>.csv`, `<name>.svg`, and one summary JSON per cell under
/// `out_dir`.
pub fn run_grid(grid: &Grid, out_dir: &Path) -> Result<(), DynError> {
    let summaries = out_dir.join("summaries");
    fs::create_dir_all(&summaries)
        .map_err(|e| format!("create {}: {e}", summaries.display()))?;

    let mut results: Vec<(&Cell, ExperimentReport)> = Vec::with_capacity(grid.cells.len());
    for (i, cell) in grid.cells.iter().enumerate() {
        eprintln!(
            "[{}] cell {}/{}: {}, {} ({}, {} trials)",
            grid.name,
            i + 1,
            grid.cells.len(),
            cell.row,
            cell.col,
            variant_label(cell.cfg.variant),
            cell.cfg.trials
        );
        let started = Instant::now();
        let (report, _trace) = harness::run_experiment(&cell.cfg)?;
        eprintln!(
            "[{}]   mean avg regret {:.6e}, mean avg surplus {:.4} ({:.1}s)",
            grid.name,
            report.regret.mean,
            report.surplus.mean,
            started.elapsed().as_secs_f64()
        );
        let path = summaries.join(format!("{}--{}.json", slug(&cell.row), slug(&cell.col)));
        harness::emit_summary(&report, &path)?;
        results.push((cell, report));
    }

    write_grid_csv(&results, &out_dir.join(format!("{}.csv", grid.name)))?;
    write_grid_svg(grid, &results, &out_dir.join(format!("{}.svg", grid.name)))?;
    print_matrix(grid, &results);
    println!("outputs in {}", out_dir.display());
    Ok(())
}

fn write_grid_csv(
    results: &[(&Cell, ExperimentReport)],
    path: &Path,
) -> Result<(), DynError> {
    let mut out = String::new();
    out.push_str(
        "row,col,variant,T,d,eps1,eps2,delta1,delta2,trials,base_seed,\
         mean_avg_regret,median_avg_regret,stddev_avg_regret,\
         mean_avg_surplus,median_avg_surplus,stddev_avg_surplus\n",
    );
    for (cell, report) in results {
        let c = &cell.cfg;
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            cell.row,
            cell.col,
            variant_label(c.variant),
            c.horizon,
            c.d,
            c.eps1,
            c.eps2,
            c.delta1,
            c.delta2,
            c.trials,
            c.base_seed,
            report.regret.mean,
            report.regret.median,
            report.regret.stddev,
            report.surplus.mean,
            report.surplus.median,
            report.surplus.stddev
        );
    }
    fs::write(path, out).map_err(|e| format!("write {}: {e}", path.display()))?;
    Ok(())
}

fn write_grid_svg(
    grid: &Grid,
    results: &[(&Cell, ExperimentReport)],
    path: &Path,
) -> Result<(), DynError> {
    // One solid series per row over the sweep axis; baseline cells become
    // dashed horizontal reference lines spanning the sweep range.
    let mut x_lo = f64::INFINITY;
    let mut x_hi = f64::NEG_INFINITY;
    for (cell, _) in results {
        if cell.x.is_finite() {
            x_lo = x_lo.min(cell.x);
            x_hi = x_hi.max(cell.x);
        }
    }
    let mut rows: Vec<String> = Vec::new();
    for (cell, _) in results {
        if !rows.contains(&cell.row) {
            rows.push(cell.row.clone());
        }
    }
    let mut series: Vec<Series> = Vec::new();
    let mut baselines: Vec<Series> = Vec::new();
    for row in &rows {
        let mut points: Vec<(f64, f64)> = results
            .iter()
            .filter(|(c, _)| &c.row == row && c.x.is_finite())
            .map(|(c, r)| (c.x, metric_of(grid.metric, r)))
            .collect();
        points.sort_by(|a, b| a.0.total_cmp(&b.0));
        if !points.is_empty() {
            series.push(Series { name: row.clone(), points, dashed: false });
        }
        for (cell, report) in results.iter().filter(|(c, _)| &c.row == row && c.x.is_nan()) {
            let y = metric_of(grid.metric, report);
            baselines.push(Series {
                name: format!("{row} {}", cell.col),
                points: vec![(x_lo, y), (x_hi, y)],
                dashed: true,
            });
        }
    }
    series.append(&mut baselines);
    let y_label = match grid.metric {
        Metric::AvgRegret => "mean average regret",
        Metric::AvgSurplus => "mean average consumer surplus",
    };
    let chart = svg::line_chart(&grid.title, "privacy budget eps", y_label, true, &series);
    fs::write(path, chart).map_err(|e| format!("write {}: {e}", path.display()))?;
    Ok(())
}

fn print_matrix(grid: &Grid, results: &[(&Cell, ExperimentReport)]) {
    let mut rows: Vec<String> = Vec::new();
    let mut cols: Vec<String> = Vec::new();
    for (cell, _) in results {
        if !rows.contains(&cell.row) {
            rows.push(cell.row.clone());
        }
        if !cols.contains(&cell.col) {
            cols.push(cell.col.clone());
        }
    }
    let unit = match grid.metric {
        Metric::AvgRegret => " (mean average regret ×1e-4)",
        Metric::AvgSurplus => " (mean average consumer surplus)",
    };
    println!("\n{}{unit}", grid.title);

    let row_width = rows.iter().map(String::len).max().unwrap_or(0).max(4);
    let col_width = cols.iter().map(String::len).max().unwrap_or(0).max(8) + 2;
    let mut header = format!("{:row_width$}", "");
    for col in &cols {
        let _ = write!(header, "{col:>col_width$}");
    }
    println!("{header}");
    for row in &rows {
        let mut line = format!("{row:row_width$}");
        for col in &cols {
            let value = results
                .iter()
                .find(|(c, _)| &c.row == row && &c.col == col)
                .map(|(_, r)| metric_display(grid.metric, metric_of(grid.metric, r)))
                .unwrap_or_default();
            let _ = write!(line, "{value:>col_width$}");
        }
        println!("{line}");
    }
}

// ---------------------------------------------------------------------------
// Single-experiment driver behind `run`.

/// Runs one experiment, prints a compact report, and writes whichever of the
/// trace CSV / summary JSON / regret-curve SVG paths were requested.
pub fn run_single(
    cfg: &ExperimentConfig,
    out_csv: Option<&Path>,
    out_summary: Option<&Path>,
    out_svg: Option<&Path>,
) -> Result<(), DynError> {
    eprintln!(
        "[run] {} T={} d={} trials={} seed={} eps=({}, {}) delta=({:e}, {:e})",
        variant_label(cfg.variant),
        cfg.horizon,
        cfg.d,
        cfg.trials,
        cfg.base_seed,
        cfg.eps1,
        cfg.eps2,
        cfg.delta1,
        cfg.delta2
    );
    let started = Instant::now();
    let (report, trace) = harness::run_experiment(cfg)?;
    eprintln!("[run] done in {:.1}s", started.elapsed().as_secs_f64());

    println!(
        "mean avg regret {:.6e} (median {:.6e}, stddev {:.6e})",
        report.regret.mean, report.regret.median, report.regret.stddev
    );
    println!(
        "mean avg surplus {:.4} (median {:.4}, stddev {:.4})",
        report.surplus.mean, report.surplus.median, report.surplus.stddev
    );
    let calls: u32 = report.trials.iter().map(|t| t.mle_calls).sum();
    println!(
        "estimator refreshes: {:.1} per trial (total {calls} over {} trials)",
        f64::from(calls) / f64::from(cfg.trials),
        cfg.trials
    );
    println!(
        "privacy total: ({}, {:e})-DP",
        report.budget.eps_total, report.budget.delta_total
    );

    if let Some(path) = out_csv {
        harness::emit_csv(&trace, path)?;
        println!("trace (trial 0): {}", path.display());
    }
    if let Some(path) = out_summary {
        harness::emit_summary(&report, path)?;
        println!("summary: {}", path.display());
    }
    if let Some(path) = out_svg {
        let points: Vec<(f64, f64)> = report
            .curve
            .iter()
            .filter(|c| c.period > 0)
            .map(|c| (c.period as f64, c.mean_cum_regret / c.period as f64))
            .collect();
        let series =
            [Series { name: "mean average regret".to_string(), points, dashed: false }];
        let chart = svg::line_chart(
            &format!("Average regret, {}", variant_label(cfg.variant)),
            "period",
            "mean average regret",
            true,
            &series,
        );
        fs::write(path, chart).map_err(|e| format!("write {}: {e}", path.display()))?;
        println!("chart: {}", path.display());
    }
    Ok(())
}

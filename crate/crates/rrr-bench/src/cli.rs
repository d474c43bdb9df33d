//! Command-line front end.
//!
//! Exit codes: 0 on success, 1 for usage/config problems, 2 when any cell
//! failed numerically (the run still writes every row it produced).

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::config::Config;
use crate::experiments::{run_bounds, run_fig1, run_fig2, run_monotonicity, run_risk};
use crate::koopman::run_koopman;
use crate::plot::render_plots;
use crate::rows::{write_aggregate_csv, write_rows_csv, ExperimentRow};
use crate::synth::{matrix_csv, synth_linear};
use crate::timing::run_bench;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_NUMERICAL: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "rrr-bench",
    version,
    about = "Randomized reduced-rank regression experiment harness"
)]
pub struct Cli {
    /// TOML configuration file; omitted fields take their defaults.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Master seed override; every cell seed derives from it.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Output directory for CSV and SVG artifacts.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,

    /// Worker threads for cell-level parallelism (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub cmd: Cmd,
}

#[derive(Debug, Subcommand)]
pub enum Cmd {
    /// Write the synthetic linear-system dataset as CSV files.
    Synth,
    /// Run sketch-accuracy experiments and write rows.csv / aggregate.csv.
    Fit {
        /// Comma-separated subset of: fig1, fig2, monotonicity.
        #[arg(long, value_delimiter = ',', default_values_t = [
            "fig1".to_string(), "fig2".to_string(), "monotonicity".to_string()
        ])]
        experiments: Vec<String>,
    },
    /// Fit all four estimators once and report their risks.
    Risk,
    /// Tabulate the expected-gap bounds over the configured grid.
    Bounds,
    /// Spectrum estimation on the noisy logistic map.
    Koopman,
    /// Median-of-k wall-time comparison of exact vs randomized fits.
    Bench,
    /// Render SVG charts from an aggregate.csv.
    Plot {
        /// Aggregate file to read (default: <out>/aggregate.csv).
        #[arg(long)]
        aggregate: Option<PathBuf>,
    },
}

fn write_file(dir: &Path, name: &str, text: &str) -> Result<(), String> {
    let path = dir.join(name);
    std::fs::write(&path, text).map_err(|e| format!("cannot write {}: {e}", path.display()))
}

fn load_config(cli: &Cli) -> Result<Config, String> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
            Config::from_toml(&text)?
        }
        None => Config::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.master_seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Writes rows.csv and aggregate.csv; returns the failed-cell count.
fn emit_rows(dir: &Path, rows: &[ExperimentRow]) -> Result<usize, String> {
    write_file(dir, "rows.csv", &write_rows_csv(rows))?;
    write_file(dir, "aggregate.csv", &write_aggregate_csv(rows))?;
    let failed = rows.iter().filter(|r| r.failed()).count();
    println!(
        "wrote {} rows ({failed} failed) to {}",
        rows.len(),
        dir.join("rows.csv").display()
    );
    Ok(failed)
}

fn dispatch(cli: &Cli, cfg: &Config) -> Result<usize, String> {
    let out = cli.out.as_path();
    match &cli.cmd {
        Cmd::Synth => {
            let data = synth_linear(&cfg.synthetic).map_err(|e| e.to_string())?;
            write_file(out, "x_train.csv", &matrix_csv(data.x_train.as_ref()))?;
            write_file(out, "y_train.csv", &matrix_csv(data.y_train.as_ref()))?;
            write_file(out, "x_test.csv", &matrix_csv(data.x_test.as_ref()))?;
            write_file(out, "y_test.csv", &matrix_csv(data.y_test.as_ref()))?;
            let mut sigma = String::from("# schema=1\nidx,sigma\n");
            for (i, s) in data.sigma.iter().enumerate() {
                sigma.push_str(&format!("{i},{s}\n"));
            }
            write_file(out, "sigma.csv", &sigma)?;
            println!(
                "wrote dataset (n_train={}, n_test={}, d={}) to {}",
                cfg.synthetic.n_train,
                cfg.synthetic.n_test,
                cfg.synthetic.d,
                out.display()
            );
            Ok(0)
        }
        Cmd::Fit { experiments } => {
            let mut wanted = experiments.clone();
            wanted.dedup();
            for name in &wanted {
                if !["fig1", "fig2", "monotonicity"].contains(&name.as_str()) {
                    return Err(format!(
                        "usage: unknown experiment {name:?} (expected fig1, fig2, monotonicity)"
                    ));
                }
            }
            let mut rows = Vec::new();
            // Canonical execution order keeps rows.csv independent of the
            // order names were given on the command line.
            if wanted.iter().any(|w| w == "fig1") {
                rows.extend(run_fig1(cfg)?.rows);
            }
            if wanted.iter().any(|w| w == "fig2") {
                rows.extend(run_fig2(cfg)?.rows);
            }
            if wanted.iter().any(|w| w == "monotonicity") {
                rows.extend(run_monotonicity(cfg)?.rows);
            }
            emit_rows(out, &rows)
        }
        Cmd::Risk => {
            let outcome = run_risk(cfg)?;
            for row in &outcome.rows {
                match (row.empirical_risk, row.optimal_risk, row.gap) {
                    (Some(emp), Some(opt), Some(gap)) => println!(
                        "{:<13} regularized_risk={emp:.9} optimal={opt:.9} gap={gap:.3e}",
                        row.algorithm
                    ),
                    _ => println!(
                        "{:<13} FAILED: {}",
                        row.algorithm,
                        row.extra_value("error").unwrap_or("unknown error")
                    ),
                }
            }
            emit_rows(out, &outcome.rows)
        }
        Cmd::Bounds => {
            let csv = run_bounds(cfg)?;
            write_file(out, "bounds.csv", &csv)?;
            println!("wrote {}", out.join("bounds.csv").display());
            Ok(0)
        }
        Cmd::Koopman => {
            let outcome = run_koopman(&cfg.koopman, cfg.master_seed)?;
            for (name, text) in &outcome.eig_files {
                write_file(out, name, text)?;
            }
            println!("wrote {} spectrum files to {}", outcome.eig_files.len(), out.display());
            emit_rows(out, &outcome.rows)
        }
        Cmd::Bench => {
            let outcome = run_bench(cfg)?;
            emit_rows(out, &outcome.rows)
        }
        Cmd::Plot { aggregate } => {
            let path = aggregate.clone().unwrap_or_else(|| out.join("aggregate.csv"));
            let text = std::fs::read_to_string(&path)
                .map_err(|e| format!("usage: cannot read {}: {e}", path.display()))?;
            let files = render_plots(&text)?;
            if files.is_empty() {
                return Err("usage: aggregate file contains no known experiment ids".into());
            }
            for (name, svg) in &files {
                write_file(out, name, svg)?;
                println!("wrote {}", out.join(name).display());
            }
            Ok(0)
        }
    }
}

/// Runs a parsed invocation and returns the process exit code.
pub fn run_cli(cli: &Cli) -> i32 {
    let cfg = match load_config(cli) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("{e}");
            return EXIT_USAGE;
        }
    };
    if cli.threads == Some(0) {
        eprintln!("--threads must be at least 1");
        return EXIT_USAGE;
    }
    if let Err(e) = std::fs::create_dir_all(&cli.out) {
        eprintln!("cannot create {}: {e}", cli.out.display());
        return EXIT_USAGE;
    }

    let pool = match rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads.unwrap_or(0))
        .build()
    {
        Ok(pool) => pool,
        Err(e) => {
            eprintln!("cannot build thread pool: {e}");
            return EXIT_USAGE;
        }
    };
    if let Some(t) = cli.threads {
        // Cap the dense-kernel parallelism too, not just our cell pool.
        let par = if t == 1 { faer::Par::Seq } else { faer::Par::rayon(t) };
        faer::set_global_parallelism(par);
    }

    match pool.install(|| dispatch(cli, &cfg)) {
        Ok(0) => EXIT_OK,
        Ok(failed) => {
            eprintln!("{failed} cell(s) failed numerically");
            EXIT_NUMERICAL
        }
        Err(e) => {
            eprintln!("{e}");
            if e.starts_with("usage:") || e.starts_with("config error") {
                EXIT_USAGE
            } else {
                EXIT_NUMERICAL
            }
        }
    }
}

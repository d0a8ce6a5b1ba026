use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;

use gl_lab::accept::{self, Suite};
use gl_lab::cell::{self, CELL_TOL, DEFAULT_ASPECT};
use gl_lab::minimize::{InitKind, SolveOptions};
use gl_lab::output;
use gl_lab::sweep::{self, DumpPolicy, ExperimentConfig, WORKERS_ENV};
use gl_lab::{lll, Error, Result};

#[derive(Parser)]
#[command(name = "gl-lab", version, about = "Numerical Ginzburg-Landau laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve every (b, seed) point of a configuration in turn, dumping all fields.
    Solve {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Solve a configuration on a pool of workers.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, env = WORKERS_ENV)]
        workers: Option<usize>,
    },
    /// Solve the periodic cell problem at one value of b.
    Cell {
        #[arg(long)]
        b: f64,
        #[arg(long, default_value_t = cell::DEFAULT_FLUX)]
        flux: u32,
        #[arg(long, default_value_t = 32)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = DEFAULT_ASPECT)]
        aspect: f64,
        /// Write the solution dump and a one-row CSV here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Lowest-Landau-level projector utilities.
    Lll {
        #[command(subcommand)]
        action: LllAction,
    },
    /// Run an acceptance suite and print its JSON report.
    Accept {
        #[arg(long)]
        suite: String,
        /// Also write the report to this file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum LllAction {
    /// Check the projector properties on an n x n grid with spacing h.
    Selftest {
        #[arg(long, default_value_t = accept::LLL_N)]
        n: usize,
        #[arg(long, default_value_t = accept::LLL_H)]
        h: f64,
        /// CSV destination; printed to stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn sweep_command(config: &Path, out: &Path, workers: usize, dump_all: bool) -> Result<ExitCode> {
    let mut cfg = ExperimentConfig::load(config)?;
    if dump_all {
        cfg.dump_fields = DumpPolicy::Always;
    }
    let outcome = sweep::run_sweep(&cfg, Some(out), workers)?;
    output::write_json(&out.join("config.json"), &cfg)?;
    #[derive(Serialize)]
    struct Summary {
        records: usize,
        converged: usize,
        diverged: Vec<(f64, u64)>,
    }
    let summary = Summary {
        records: outcome.records.len(),
        converged: outcome.records.iter().filter(|r| r.converged).count(),
        diverged: outcome.diverged.clone(),
    };
    output::write_json(&out.join("summary.json"), &summary)?;
    print_json(&summary)?;
    Ok(if outcome.diverged.is_empty() { ExitCode::SUCCESS } else { ExitCode::from(2) })
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Solve { config, out } => sweep_command(&config, &out, 1, true),
        Command::Sweep { config, out, workers } => {
            sweep_command(&config, &out, workers.unwrap_or_else(sweep::default_workers), false)
        }
        Command::Cell { b, flux, n, seed, aspect, out } => {
            let c = cell::make_cell(flux, aspect, n)?;
            let opts = SolveOptions {
                tol_residual: CELL_TOL,
                init: InitKind::RandomComplex { seed, amplitude: 0.3 },
                ..SolveOptions::default()
            };
            let (u, report) = cell::solve_cell(&c, b, &opts)?;
            let point = cell::CurvePoint {
                b,
                flux_quanta: flux,
                aspect,
                n,
                seed,
                sup_norm: report.sup_norm,
                energy: report.energy,
                residual_inf: report.residual_inf,
                converged: report.converged,
            };
            if let Some(dir) = out {
                std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
                u.write_dump(&dir.join("u"))?;
                cell::write_curve_csv(&dir.join("cell.csv"), std::slice::from_ref(&point))?;
            }
            print_json(&point)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Lll { action: LllAction::Selftest { n, h, out } } => {
            let rows = lll::selftest(n, h)?;
            match out {
                Some(path) => output::write_csv(&path, &rows)?,
                None => {
                    let mut w = csv::Writer::from_writer(std::io::stdout());
                    for r in &rows {
                        w.serialize(r)?;
                    }
                    w.flush().map_err(|e| Error::io("<stdout>", e))?;
                }
            }
            Ok(if rows.iter().all(|r| r.pass) { ExitCode::SUCCESS } else { ExitCode::from(3) })
        }
        Command::Accept { suite, out } => {
            let suite: Suite = suite.parse()?;
            let report = accept::run_acceptance(suite)?;
            if let Some(path) = out {
                output::write_json(&path, &report)?;
            }
            for c in &report.checks {
                eprintln!("{}", c.line());
            }
            print_json(&report)?;
            Ok(if report.passed { ExitCode::SUCCESS } else { ExitCode::from(3) })
        }
    }
}

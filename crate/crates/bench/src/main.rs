//! Benchmark CLI. Exit codes: 0 success, 1 check failure, 2 config error,
//! 3 runtime abort (I/O failures and solver aborts).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use tbmm_bench::checks::run_checks;
use tbmm_bench::config::parse_file;
use tbmm_bench::runner::{run_experiment, BenchError};

#[derive(Parser)]
#[command(
    name = "tbmm-bench",
    about = "Benchmark runner for block majorization-minimization solvers",
    version
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run an experiment config and write CSV traces, aggregates, and a
    /// plot script into the output directory
    Run {
        /// Path to a flat key-value experiment config
        config: PathBuf,
        /// Override the config's output_dir
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override the config's trial count
        #[arg(long)]
        trials: Option<usize>,
        /// Override the config's base seed
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads for trial execution
        #[arg(long, default_value_t = 1)]
        parallel: usize,
    },
    /// Run the verification suite and print one PASS/FAIL line per check
    Check {
        /// Only run checks whose name contains this substring
        #[arg(long)]
        filter: Option<String>,
        #[arg(long, hide = true)]
        broken_fixture: bool,
    },
    /// Print the version
    Version,
}

fn main() -> ExitCode {
    match Cli::parse().cmd {
        Cmd::Run {
            config,
            out,
            trials,
            seed,
            parallel,
        } => {
            let mut cfg = match parse_file(&config) {
                Ok(cfg) => cfg,
                Err(e) => {
                    eprintln!("{e}");
                    return ExitCode::from(2);
                }
            };
            if let Some(dir) = out {
                cfg.output_dir = dir;
            }
            if let Some(t) = trials {
                cfg.trials = t;
            }
            if let Some(s) = seed {
                cfg.base_seed = s;
            }
            if let Err(e) = cfg.validate() {
                eprintln!("{e}");
                return ExitCode::from(2);
            }
            match run_experiment(&cfg, parallel.max(1)) {
                Ok(report) => {
                    println!(
                        "{}: {} solver runs, {} files in {}",
                        cfg.name,
                        report.results.len(),
                        report.files.len(),
                        cfg.output_dir.display()
                    );
                    for r in &report.results {
                        for w in &r.warnings {
                            eprintln!("warning: {} trial {}: {w}", r.solver, r.trial);
                        }
                    }
                    if report.any_aborted {
                        eprintln!("one or more solver runs aborted; see {}_status.csv", cfg.name);
                        ExitCode::from(3)
                    } else {
                        ExitCode::SUCCESS
                    }
                }
                Err(e @ BenchError::Config(_)) => {
                    eprintln!("{e}");
                    ExitCode::from(2)
                }
                Err(e) => {
                    eprintln!("{e}");
                    ExitCode::from(3)
                }
            }
        }
        Cmd::Check {
            filter,
            broken_fixture,
        } => {
            let outcome = run_checks(filter.as_deref(), broken_fixture);
            if outcome.selected == 0 {
                eprintln!("no checks match the filter");
                return ExitCode::from(2);
            }
            for r in &outcome.reports {
                println!("{}", r.line());
            }
            if outcome.all_passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Cmd::Version => {
            println!("tbmm-bench {}", env!("CARGO_PKG_VERSION"));
            ExitCode::SUCCESS
        }
    }
}

//! Experiment execution: per-trial problem construction, solver dispatch,
//! and file emission.
//!
//! Seed derivation per trial t: `trial_seed(base_seed, t)` feeds the data,
//! init, and per-solver streams (see the seeding module). The problem is
//! built once per trial and every solver starts from the same random
//! initialization, so curves differ only by algorithm. Trials may run on
//! worker threads; all file writes happen in a single pass after the last
//! trial finishes.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use tbmm::problems::{
    make_matrix_recovery, make_ncpd, make_nmf, make_sparse_pca, ProblemInstance,
};
use tbmm::solvers::{
    block_pgd_run, inexact_rgd_run, niht_run, stiefel_proxgrad_run, tbmm_run, IterRecord,
    SolverConfig, SolverError, Termination,
};

use crate::aggregate::{self, fmt_float};
use crate::config::{ExperimentConfig, ExperimentKind, SolverKind, TimingMode};
use crate::plotgen;
use crate::seeding;

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("config error: {0}")]
    Config(String),
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RunStatus {
    Completed(Termination),
    Aborted(String),
}

impl RunStatus {
    fn columns(&self) -> (&'static str, String) {
        match self {
            RunStatus::Completed(t) => (
                "completed",
                match t {
                    Termination::MaxIters => "max_iters".into(),
                    Termination::TimeLimit => "time_limit".into(),
                    Termination::StationarityTol => "stationarity_tol".into(),
                },
            ),
            // Commas would break the row.
            RunStatus::Aborted(msg) => ("aborted", msg.replace(',', ";")),
        }
    }
}

/// One solver's trace on one trial. Aborted runs keep whatever prefix of
/// records was completed (none, when the driver fails fast).
#[derive(Debug, Clone)]
pub struct TrialResult {
    pub solver: String,
    pub trial: usize,
    pub records: Vec<IterRecord>,
    pub status: RunStatus,
    pub warnings: Vec<String>,
    pub descent_violations: Vec<usize>,
}

#[derive(Debug)]
pub struct RunReport {
    pub results: Vec<TrialResult>,
    pub files: Vec<PathBuf>,
    pub any_aborted: bool,
}

pub fn build_problem(cfg: &ExperimentConfig, data_seed: u64) -> Result<ProblemInstance, BenchError> {
    let p = &cfg.params;
    let built = match cfg.experiment {
        ExperimentKind::Matrec | ExperimentKind::InexactRgd => {
            make_matrix_recovery(p.rows, p.cols, p.rank, p.measurements, data_seed)
        }
        ExperimentKind::Ncpd => make_ncpd(
            p.dims,
            p.cp_rank,
            p.rank,
            [p.l1_weight; 3],
            p.nonneg,
            data_seed,
        ),
        ExperimentKind::Nmf => make_nmf(
            p.rows, p.cols, p.inner, p.rank, p.l1_weight, p.nonneg, data_seed,
        ),
        ExperimentKind::StiefelProxgrad => {
            make_sparse_pca(p.rows, p.cols, p.l1_weight, data_seed)
        }
    };
    built.map_err(|e| BenchError::Config(e.to_string()))
}

fn dispatch(
    experiment: ExperimentKind,
    kind: SolverKind,
    problem: &ProblemInstance,
    sc: &SolverConfig,
    init: &tbmm::manifolds::BlockPoint,
) -> Result<tbmm::solvers::RunTrace, SolverError> {
    match kind {
        SolverKind::Tbmm if experiment == ExperimentKind::StiefelProxgrad => {
            stiefel_proxgrad_run(problem, sc, init)
        }
        SolverKind::Tbmm => tbmm_run(problem, sc, init),
        SolverKind::BlockPgd => block_pgd_run(problem, sc, init),
        SolverKind::Niht => niht_run(problem, sc.max_iters, init, sc.seed),
        SolverKind::Rgd => inexact_rgd_run(problem, sc, init),
    }
}

/// Runs every solver on trial `t`. Configuration mistakes abort the whole
/// experiment; numerical failures mid-run become per-solver aborted rows.
pub fn run_trial(cfg: &ExperimentConfig, t: usize) -> Result<Vec<TrialResult>, BenchError> {
    let ts = seeding::trial_seed(cfg.base_seed, t);
    let problem = build_problem(cfg, seeding::data_seed(ts))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seeding::init_seed(ts));
    let init = problem.init_point(&mut rng);

    let mut out = Vec::with_capacity(cfg.solvers.len());
    for (j, entry) in cfg.solvers.iter().enumerate() {
        let mut sc = entry.config.clone();
        sc.seed = seeding::solver_seed(ts, j);
        match dispatch(cfg.experiment, entry.kind, &problem, &sc, &init) {
            Ok(trace) => out.push(TrialResult {
                solver: entry.name.clone(),
                trial: t,
                records: trace.records,
                status: RunStatus::Completed(trace.termination),
                warnings: trace.warnings,
                descent_violations: trace.descent_violations,
            }),
            Err(SolverError::Config(msg)) => {
                return Err(BenchError::Config(format!("solver {}: {msg}", entry.name)))
            }
            Err(e) => out.push(TrialResult {
                solver: entry.name.clone(),
                trial: t,
                records: Vec::new(),
                status: RunStatus::Aborted(e.to_string()),
                warnings: Vec::new(),
                descent_violations: Vec::new(),
            }),
        }
    }
    Ok(out)
}

/// Runs all trials (optionally across `parallel` workers), then writes the
/// per-trial CSVs, the status table, the aggregates, and the plot script.
pub fn run_experiment(cfg: &ExperimentConfig, parallel: usize) -> Result<RunReport, BenchError> {
    cfg.validate().map_err(|e| BenchError::Config(e.to_string()))?;
    std::fs::create_dir_all(&cfg.output_dir).map_err(|source| BenchError::Io {
        path: cfg.output_dir.clone(),
        source,
    })?;

    let mut by_trial: Vec<Option<Vec<TrialResult>>> = vec![None; cfg.trials];
    if parallel <= 1 {
        for (t, slot) in by_trial.iter_mut().enumerate() {
            *slot = Some(run_trial(cfg, t)?);
        }
    } else {
        let slots = Mutex::new(&mut by_trial);
        let first_err: Mutex<Option<BenchError>> = Mutex::new(None);
        let workers = parallel.min(cfg.trials);
        std::thread::scope(|scope| {
            for w in 0..workers {
                let slots = &slots;
                let first_err = &first_err;
                scope.spawn(move || {
                    let mut t = w;
                    while t < cfg.trials {
                        if first_err.lock().expect("lock").is_some() {
                            return;
                        }
                        match run_trial(cfg, t) {
                            Ok(res) => {
                                slots.lock().expect("lock")[t] = Some(res);
                            }
                            Err(e) => {
                                first_err.lock().expect("lock").get_or_insert(e);
                                return;
                            }
                        }
                        t += workers;
                    }
                });
            }
        });
        if let Some(e) = first_err.into_inner().expect("lock") {
            return Err(e);
        }
    }
    let results: Vec<TrialResult> = by_trial
        .into_iter()
        .map(|slot| slot.expect("every trial filled"))
        .flatten()
        .collect();

    let files = write_outputs(cfg, &results)?;
    let any_aborted = results
        .iter()
        .any(|r| matches!(r.status, RunStatus::Aborted(_)));
    Ok(RunReport {
        results,
        files,
        any_aborted,
    })
}

pub const TRACE_HEADER: &str = "solver,trial,iter,elapsed_s,objective,rel_error,stationarity,delta_n";

fn trial_csv(result: &TrialResult, timing: TimingMode) -> String {
    let mut s = String::with_capacity(64 * (result.records.len() + 1));
    s.push_str(TRACE_HEADER);
    s.push('\n');
    for r in &result.records {
        let elapsed = match timing {
            TimingMode::Wall => r.elapsed,
            TimingMode::None => 0.0,
        };
        writeln!(
            s,
            "{},{},{},{},{},{},{},{}",
            result.solver,
            result.trial,
            r.iter,
            fmt_float(elapsed),
            fmt_float(r.objective),
            fmt_float(r.rel_error),
            fmt_float(r.stationarity),
            fmt_float(r.delta_n)
        )
        .expect("string write");
    }
    s
}

fn write_file(path: &Path, content: &str) -> Result<(), BenchError> {
    std::fs::write(path, content).map_err(|source| BenchError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn write_outputs(cfg: &ExperimentConfig, results: &[TrialResult]) -> Result<Vec<PathBuf>, BenchError> {
    let mut files = Vec::new();
    let dir = &cfg.output_dir;

    for r in results {
        let path = dir.join(format!("{}_{}_trial{}.csv", cfg.name, r.solver, r.trial));
        write_file(&path, &trial_csv(r, cfg.timing))?;
        files.push(path);
    }

    let mut status = String::from("solver,trial,status,detail\n");
    for r in results {
        let (st, detail) = r.status.columns();
        writeln!(status, "{},{},{},{}", r.solver, r.trial, st, detail).expect("string write");
    }
    let status_path = dir.join(format!("{}_status.csv", cfg.name));
    write_file(&status_path, &status)?;
    files.push(status_path);

    let order: Vec<String> = cfg.solvers.iter().map(|s| s.name.clone()).collect();
    let agg_path = dir.join(format!("{}_aggregate.csv", cfg.name));
    write_file(&agg_path, &aggregate::iteration_csv(results, &order))?;
    files.push(agg_path);

    let has_time = cfg.timing == TimingMode::Wall;
    if has_time {
        let time_path = dir.join(format!("{}_time_aggregate.csv", cfg.name));
        write_file(&time_path, &aggregate::time_csv(results, &order))?;
        files.push(time_path);
    }

    // Sampling-regime bookkeeping, when the family defines it.
    let probe = build_problem(cfg, seeding::data_seed(seeding::trial_seed(cfg.base_seed, 0)))?;
    if let (Some(rho), Some(mu)) = (probe.rho, probe.mu) {
        let meta = format!(
            "experiment = {}\ntrials = {}\nbase_seed = {}\nrho = {}/{} = {}\nmu = {}/{} = {}\n",
            cfg.experiment.token(),
            cfg.trials,
            cfg.base_seed,
            rho.0,
            rho.1,
            rho.0 as f64 / rho.1 as f64,
            mu.0,
            mu.1,
            mu.0 as f64 / mu.1 as f64,
        );
        let meta_path = dir.join(format!("{}_meta.txt", cfg.name));
        write_file(&meta_path, &meta)?;
        files.push(meta_path);
    }

    let plot_path = dir.join(format!("{}_plot.py", cfg.name));
    write_file(&plot_path, &plotgen::plot_script(&cfg.name, has_time))?;
    files.push(plot_path);

    Ok(files)
}

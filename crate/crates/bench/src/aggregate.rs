//! Cross-trial aggregation of solver traces.
//!
//! Iteration-aligned rows average trials at each iteration index, truncated
//! to the shortest completed trial per solver. Wall-clock rows resample each
//! trial onto a shared grid of 64 log-spaced checkpoints (spanning the
//! earliest positive to the latest recorded time across all solvers) by
//! last-observation-carried-forward, so solvers with unequal per-iteration
//! cost stay comparable. Aborted runs contribute nothing to either table.

use std::fmt::Write as _;

use tbmm::solvers::IterRecord;

use crate::runner::{RunStatus, TrialResult};

pub const CHECKPOINTS: usize = 64;

/// Floats print as `{:.16e}` (17 significant digits); NaN prints as `nan`.
pub fn fmt_float(v: f64) -> String {
    if v.is_nan() {
        "nan".to_string()
    } else {
        format!("{v:.16e}")
    }
}

fn completed<'a>(results: &'a [TrialResult], solver: &str) -> Vec<&'a [IterRecord]> {
    results
        .iter()
        .filter(|r| {
            r.solver == solver
                && matches!(r.status, RunStatus::Completed(_))
                && !r.records.is_empty()
        })
        .map(|r| r.records.as_slice())
        .collect()
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[derive(Debug, Clone)]
pub struct IterRow {
    pub solver: String,
    pub iter: usize,
    pub mean_rel_error: f64,
    pub std_rel_error: f64,
    pub mean_objective: f64,
    pub mean_stationarity: f64,
}

pub fn iteration_rows(results: &[TrialResult], order: &[String]) -> Vec<IterRow> {
    let mut rows = Vec::new();
    for solver in order {
        let trials = completed(results, solver);
        let Some(len) = trials.iter().map(|t| t.len()).min() else {
            continue;
        };
        for i in 0..len {
            let col = |f: fn(&IterRecord) -> f64| -> Vec<f64> {
                trials.iter().map(|t| f(&t[i])).collect()
            };
            let (mean_rel, std_rel) = mean_std(&col(|r| r.rel_error));
            let (mean_obj, _) = mean_std(&col(|r| r.objective));
            let (mean_stat, _) = mean_std(&col(|r| r.stationarity));
            rows.push(IterRow {
                solver: solver.clone(),
                iter: i,
                mean_rel_error: mean_rel,
                std_rel_error: std_rel,
                mean_objective: mean_obj,
                mean_stationarity: mean_stat,
            });
        }
    }
    rows
}

pub const ITER_HEADER: &str = "solver,iter,mean_rel_error,std_rel_error,mean_objective,mean_stationarity";

pub fn iteration_csv(results: &[TrialResult], order: &[String]) -> String {
    let mut s = String::from(ITER_HEADER);
    s.push('\n');
    for row in iteration_rows(results, order) {
        writeln!(
            s,
            "{},{},{},{},{},{}",
            row.solver,
            row.iter,
            fmt_float(row.mean_rel_error),
            fmt_float(row.std_rel_error),
            fmt_float(row.mean_objective),
            fmt_float(row.mean_stationarity)
        )
        .expect("string write");
    }
    s
}

/// Shared grid: 64 log-spaced times from the earliest positive elapsed to
/// the latest elapsed over all completed records. Empty when nothing was
/// timed.
pub fn time_grid(results: &[TrialResult]) -> Vec<f64> {
    let mut t_min = f64::INFINITY;
    let mut t_max: f64 = 0.0;
    for r in results {
        if !matches!(r.status, RunStatus::Completed(_)) {
            continue;
        }
        for rec in &r.records {
            if rec.elapsed > 0.0 {
                t_min = t_min.min(rec.elapsed);
            }
            t_max = t_max.max(rec.elapsed);
        }
    }
    if !t_min.is_finite() || t_max <= 0.0 {
        return Vec::new();
    }
    let ratio = t_max / t_min;
    (0..CHECKPOINTS)
        .map(|k| t_min * ratio.powf(k as f64 / (CHECKPOINTS - 1) as f64))
        .collect()
}

#[derive(Debug, Clone)]
pub struct TimeRow {
    pub solver: String,
    pub checkpoint: usize,
    pub time_s: f64,
    pub mean_rel_error: f64,
    pub std_rel_error: f64,
}

/// Last-observation-carried-forward value at time `t`; checkpoints earlier
/// than the first record report the initial value.
fn locf(records: &[IterRecord], t: f64) -> f64 {
    let mut value = records[0].rel_error;
    for rec in records {
        if rec.elapsed <= t {
            value = rec.rel_error;
        } else {
            break;
        }
    }
    value
}

pub fn time_rows(results: &[TrialResult], order: &[String], grid: &[f64]) -> Vec<TimeRow> {
    let mut rows = Vec::new();
    for solver in order {
        let trials = completed(results, solver);
        if trials.is_empty() {
            continue;
        }
        for (k, &t) in grid.iter().enumerate() {
            let vals: Vec<f64> = trials.iter().map(|recs| locf(recs, t)).collect();
            let (mean, std) = mean_std(&vals);
            rows.push(TimeRow {
                solver: solver.clone(),
                checkpoint: k,
                time_s: t,
                mean_rel_error: mean,
                std_rel_error: std,
            });
        }
    }
    rows
}

pub const TIME_HEADER: &str = "solver,checkpoint,time_s,mean_rel_error,std_rel_error";

pub fn time_csv(results: &[TrialResult], order: &[String]) -> String {
    let grid = time_grid(results);
    let mut s = String::from(TIME_HEADER);
    s.push('\n');
    for row in time_rows(results, order, &grid) {
        writeln!(
            s,
            "{},{},{},{},{}",
            row.solver,
            row.checkpoint,
            fmt_float(row.time_s),
            fmt_float(row.mean_rel_error),
            fmt_float(row.std_rel_error)
        )
        .expect("string write");
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use tbmm::solvers::Termination;

    fn rec(iter: usize, elapsed: f64, rel: f64) -> IterRecord {
        IterRecord {
            iter,
            elapsed,
            objective: 2.0 * rel,
            rel_error: rel,
            stationarity: 3.0 * rel,
            delta_n: 0.0,
            step_norms: vec![],
            alpha_used: vec![],
        }
    }

    fn trial(solver: &str, t: usize, recs: Vec<IterRecord>) -> TrialResult {
        TrialResult {
            solver: solver.into(),
            trial: t,
            records: recs,
            status: RunStatus::Completed(Termination::MaxIters),
            warnings: vec![],
            descent_violations: vec![],
        }
    }

    #[test]
    fn means_and_stds_match_hand_values() {
        let results = vec![
            trial("a", 0, vec![rec(0, 0.1, 1.0), rec(1, 0.2, 0.5)]),
            trial("a", 1, vec![rec(0, 0.1, 3.0), rec(1, 0.2, 0.7)]),
        ];
        let rows = iteration_rows(&results, &["a".into()]);
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].mean_rel_error, 2.0);
        // Sample std of {1, 3} is sqrt(2).
        assert!((rows[0].std_rel_error - 2.0f64.sqrt()).abs() < 1e-15);
        assert_eq!(rows[0].mean_objective, 4.0);
        assert_eq!(rows[0].mean_stationarity, 6.0);
        assert!((rows[1].mean_rel_error - 0.6).abs() < 1e-15);
    }

    #[test]
    fn unequal_trials_truncate_to_the_shortest() {
        let results = vec![
            trial("a", 0, vec![rec(0, 0.1, 1.0), rec(1, 0.2, 0.5), rec(2, 0.3, 0.2)]),
            trial("a", 1, vec![rec(0, 0.1, 1.0), rec(1, 0.2, 0.5)]),
        ];
        assert_eq!(iteration_rows(&results, &["a".into()]).len(), 2);
    }

    #[test]
    fn aborted_trials_are_excluded() {
        let mut bad = trial("a", 1, vec![rec(0, 0.1, 9.9)]);
        bad.status = RunStatus::Aborted("nan".into());
        let results = vec![trial("a", 0, vec![rec(0, 0.1, 1.0)]), bad];
        let rows = iteration_rows(&results, &["a".into()]);
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].mean_rel_error, 1.0);
        assert_eq!(rows[0].std_rel_error, 0.0);
    }

    #[test]
    fn grid_spans_the_observed_times_logarithmically() {
        let results = vec![trial(
            "a",
            0,
            vec![rec(0, 1e-3, 1.0), rec(1, 1e-1, 0.5), rec(2, 10.0, 0.1)],
        )];
        let grid = time_grid(&results);
        assert_eq!(grid.len(), CHECKPOINTS);
        assert!((grid[0] - 1e-3).abs() < 1e-12);
        assert!((grid[CHECKPOINTS - 1] - 10.0).abs() < 1e-9);
        // Log-uniform: consecutive ratios are constant.
        let q0 = grid[1] / grid[0];
        let q1 = grid[33] / grid[32];
        assert!((q0 - q1).abs() < 1e-12);
    }

    #[test]
    fn locf_carries_the_last_observation() {
        let recs = vec![rec(0, 1.0, 1.0), rec(1, 2.0, 0.5), rec(2, 4.0, 0.1)];
        assert_eq!(locf(&recs, 0.5), 1.0); // before the first observation
        assert_eq!(locf(&recs, 1.0), 1.0);
        assert_eq!(locf(&recs, 3.0), 0.5);
        assert_eq!(locf(&recs, 100.0), 0.1);
    }

    #[test]
    fn time_rows_cover_each_solver_at_every_checkpoint() {
        let results = vec![
            trial("a", 0, vec![rec(0, 0.01, 1.0), rec(1, 1.0, 0.2)]),
            trial("b", 0, vec![rec(0, 0.02, 1.0), rec(1, 2.0, 0.4)]),
        ];
        let order = vec!["a".to_string(), "b".to_string()];
        let grid = time_grid(&results);
        let rows = time_rows(&results, &order, &grid);
        assert_eq!(rows.len(), 2 * CHECKPOINTS);
        let last_a = &rows[CHECKPOINTS - 1];
        assert_eq!(last_a.solver, "a");
        assert_eq!(last_a.mean_rel_error, 0.2);
        let last_b = &rows[2 * CHECKPOINTS - 1];
        assert_eq!(last_b.mean_rel_error, 0.4);
    }

    #[test]
    fn csv_headers_are_pinned() {
        let results = vec![trial("a", 0, vec![rec(0, 0.1, 1.0)])];
        let order = vec!["a".to_string()];
        assert!(iteration_csv(&results, &order).starts_with(
            "solver,iter,mean_rel_error,std_rel_error,mean_objective,mean_stationarity\n"
        ));
        assert!(time_csv(&results, &order)
            .starts_with("solver,checkpoint,time_s,mean_rel_error,std_rel_error\n"));
    }
}

//! Outer-loop drivers. `tbmm_run` performs cyclic tangential
//! majorization-minimization sweeps with exact or certified-inexact
//! subproblem solves; `inexact_rgd_run` is single-block Riemannian gradient
//! descent with a summable gradient-noise schedule; `niht_run` and
//! `block_pgd_run` are the hard-thresholding and projected-gradient
//! baselines; `stiefel_proxgrad_run` specializes tBMM to proximal gradient
//! on a Stiefel block. All drivers emit the same per-iteration record
//! schema so the bench layer can compare them directly.

use crate::linalg::{fro_norm, gaussian_matrix, Matrix};
use crate::manifolds::{
    check_point, factorize, project_constraint, project_manifold, project_nonneg_fixed_rank,
    retract, retract_factored, tangent_project_factored, tangent_project_unchecked, BlockPoint,
    ConstraintSpec, FactoredTangent, FixedRankFactors, GeometryError, ManifoldSpec, TangentVector,
};
use crate::problems::{ProblemInstance, SensingOperator};
use crate::surrogates::{
    solve_exact_separable, solve_exact_unconstrained, solve_inexact, stationarity_value,
    NonsmoothTerm, ProxLinearSurrogate, SubproblemResult, SubspaceProjector, SurrogateError,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::time::Instant;
use thiserror::Error;

/// Shrink cap for the backtracking line search; exhaustion returns step 0 and
/// the driver skips the block for that sweep.
pub const LINE_SEARCH_MAX_SHRINKS: usize = 60;
/// Additive slack in the per-iteration descent flag
/// f(n) <= f(n-1) + m * delta_n + slack.
pub const DESCENT_AUDIT_SLACK: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("bad solver configuration: {0}")]
    Config(String),
    #[error("geometry failure: {0}")]
    Geometry(#[from] GeometryError),
    #[error("subproblem failure: {0}")]
    Surrogate(#[from] SurrogateError),
    #[error("objective became non-finite at iteration {iter}")]
    NanObjective { iter: usize },
}

#[derive(Debug, Clone)]
pub enum StepMode {
    /// Fixed step in (0, 1].
    Constant(f64),
    /// Backtracking on the marginal objective: largest alpha0 * gamma^k
    /// giving decrease at least (rho * alpha / 4) |V|^2 at a feasible point.
    LineSearch { gamma: f64, rho: f64 },
    /// Constant step lambda / (lambda + 2 * L_psi * m2), the worst-case-rate
    /// step for nonsmooth terms with Lipschitz constant L_psi and retraction
    /// curvature bound m2.
    TheoremRate { m2: f64 },
}

#[derive(Debug, Clone)]
pub enum LambdaMode {
    /// One proximal weight per block.
    Fixed(Vec<f64>),
    /// safety * (per-block Lipschitz constant), re-measured at each block's
    /// turn within the sweep so cross-block coupling is honored.
    FromLipschitz { safety: f64 },
}

#[derive(Debug, Clone)]
pub enum SubproblemMode {
    Exact,
    /// Iterative subproblem solves with per-iteration tolerance
    /// tol0 / n^2 at outer iteration n and a hard inner-step budget.
    Inexact { tol0: f64, budget: usize },
}

#[derive(Debug, Clone)]
pub enum NoiseMode {
    None,
    /// Tangent gradient perturbation of norm exactly c / n^2 at outer
    /// iteration n (gradient-descent driver only).
    GradNoise { c: f64 },
}

#[derive(Debug, Clone)]
pub struct SolverConfig {
    pub max_iters: usize,
    pub step_mode: StepMode,
    pub lambda_mode: LambdaMode,
    pub subproblem_mode: SubproblemMode,
    pub noise: NoiseMode,
    pub seed: u64,
    pub time_limit: Option<f64>,
    /// Early stop once the recorded stationarity falls below this; None (the
    /// default) reproduces fixed-budget runs.
    pub stationarity_tol: Option<f64>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            max_iters: 100,
            step_mode: StepMode::Constant(1.0),
            lambda_mode: LambdaMode::FromLipschitz { safety: 1.01 },
            subproblem_mode: SubproblemMode::Exact,
            noise: NoiseMode::None,
            seed: 0,
            time_limit: None,
            stationarity_tol: None,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self, problem: &ProblemInstance) -> Result<(), SolverError> {
        match self.step_mode {
            StepMode::Constant(a) => {
                if !(a > 0.0 && a <= 1.0) {
                    return Err(SolverError::Config(format!("step alpha = {a}")));
                }
            }
            StepMode::LineSearch { gamma, rho } => {
                if !(gamma > 0.0 && gamma < 1.0) || !(rho > 0.0 && rho.is_finite()) {
                    return Err(SolverError::Config(format!(
                        "line search gamma = {gamma}, rho = {rho}"
                    )));
                }
            }
            StepMode::TheoremRate { m2 } => {
                if !(m2 > 0.0 && m2.is_finite()) {
                    return Err(SolverError::Config(format!("curvature bound m2 = {m2}")));
                }
            }
        }
        match &self.lambda_mode {
            LambdaMode::Fixed(ls) => {
                if ls.len() != problem.block_count() {
                    return Err(SolverError::Config(format!(
                        "{} lambdas for {} blocks",
                        ls.len(),
                        problem.block_count()
                    )));
                }
                if ls.iter().any(|l| !(l.is_finite() && *l > 0.0)) {
                    return Err(SolverError::Config("lambdas must be positive".into()));
                }
            }
            LambdaMode::FromLipschitz { safety } => {
                if !(*safety >= 1.0 && safety.is_finite()) {
                    return Err(SolverError::Config(format!("safety factor = {safety}")));
                }
            }
        }
        if let SubproblemMode::Inexact { tol0, budget } = self.subproblem_mode {
            if !(tol0 >= 0.0 && tol0.is_finite()) || budget == 0 {
                return Err(SolverError::Config(format!(
                    "inexact tol0 = {tol0}, budget = {budget}"
                )));
            }
        }
        if let NoiseMode::GradNoise { c } = self.noise {
            if !(c >= 0.0 && c.is_finite()) {
                return Err(SolverError::Config(format!("noise scale c = {c}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct IterRecord {
    pub iter: usize,
    pub elapsed: f64,
    pub objective: f64,
    /// NaN when the problem has no ground truth.
    pub rel_error: f64,
    pub stationarity: f64,
    pub delta_n: f64,
    pub step_norms: Vec<f64>,
    pub alpha_used: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    MaxIters,
    TimeLimit,
    StationarityTol,
}

#[derive(Debug, Clone)]
pub struct RunTrace {
    pub records: Vec<IterRecord>,
    pub final_point: BlockPoint,
    pub termination: Termination,
    pub warnings: Vec<String>,
    /// Iterations where f(n) > f(n-1) + m * delta_n + slack; independent of
    /// the after-the-fact audit in the checker module.
    pub descent_violations: Vec<usize>,
}

fn lambda_for(
    problem: &ProblemInstance,
    point: &BlockPoint,
    i: usize,
    mode: &LambdaMode,
) -> Result<f64, SolverError> {
    match mode {
        LambdaMode::Fixed(ls) => Ok(ls[i]),
        LambdaMode::FromLipschitz { safety } => {
            let l = problem.lipschitz(point, i).ok_or_else(|| {
                SolverError::Config(format!("block {i} exposes no Lipschitz constant"))
            })?;
            if !(l.is_finite() && l > 0.0) {
                return Err(SolverError::Config(format!("block {i} Lipschitz = {l}")));
            }
            Ok(safety * l)
        }
    }
}

/// Tangent-space projector for one block, owning whatever state it needs so
/// it can outlive the sweep bookkeeping. Euclidean blocks need none.
fn block_projector(
    spec: &ManifoldSpec,
    x: &Matrix,
    factors: &Option<FixedRankFactors>,
) -> Option<Box<SubspaceProjector<'static>>> {
    match spec {
        ManifoldSpec::Euclidean { .. } => None,
        ManifoldSpec::FixedRank { .. } => {
            let f = factors.clone().expect("fixed-rank blocks carry factors");
            Some(Box::new(move |e: &Matrix| {
                tangent_project_factored(&f, e).to_ambient()
            }))
        }
        _ => {
            let spec = spec.clone();
            let x = x.clone();
            Some(Box::new(move |e: &Matrix| {
                tangent_project_unchecked(&spec, &x, e)
                    .expect("projector base point validated at entry")
                    .to_ambient()
            }))
        }
    }
}

struct BlockSolve {
    result: SubproblemResult,
    surrogate: ProxLinearSurrogate,
    projector: Option<Box<SubspaceProjector<'static>>>,
}

/// Marginal subproblem for block i at the current (partially updated) point.
/// outer_n = 0 is the pre-run measurement pass; the inexact tolerance
/// schedule treats it like the first iteration.
fn solve_block(
    problem: &ProblemInstance,
    point: &BlockPoint,
    factors: &Option<FixedRankFactors>,
    i: usize,
    lambda: f64,
    mode: &SubproblemMode,
    outer_n: usize,
) -> Result<BlockSolve, SolverError> {
    let (spec, cons) = &problem.block_specs[i];
    let psi = &problem.nonsmooth[i];
    let theta = &point.blocks[i];
    let egrad = problem.block_euclid_grad(point, i);
    let rgrad = match spec {
        ManifoldSpec::Euclidean { .. } => TangentVector::Ambient(egrad),
        ManifoldSpec::FixedRank { .. } => TangentVector::Factored(tangent_project_factored(
            factors.as_ref().expect("fixed-rank blocks carry factors"),
            &egrad,
        )),
        _ => tangent_project_unchecked(spec, theta, &egrad)?,
    };
    let projector = block_projector(spec, theta, factors);
    // Surrogate values are only ever differenced, so the base is zero.
    let surrogate = ProxLinearSurrogate::new(0.0, rgrad, lambda)?;
    // The nonnegative fixed-rank intersection enters the tangent solve as the
    // shifted orthant on theta + eta; the manifold side is restored by the
    // post-retraction alternating projection.
    let sub_cons = match cons {
        ConstraintSpec::NonnegativeFixedRank => ConstraintSpec::NonnegativeOrthant,
        c => *c,
    };
    let psi_vanishes = match psi {
        NonsmoothTerm::None => true,
        NonsmoothTerm::L1 { weight } => *weight == 0.0,
        _ => false,
    };
    let result = match mode {
        SubproblemMode::Exact => match (psi_vanishes, sub_cons) {
            (true, ConstraintSpec::WholeManifold) => solve_exact_unconstrained(&surrogate),
            _ if matches!(spec, ManifoldSpec::Euclidean { .. }) => {
                solve_exact_separable(&surrogate, psi, theta, sub_cons)?
            }
            _ => {
                return Err(SolverError::Config(format!(
                    "block {i} couples a nonsmooth term or constraint with a curved manifold; \
                     no closed-form subproblem, use inexact mode"
                )))
            }
        },
        SubproblemMode::Inexact { tol0, budget } => {
            let n = outer_n.max(1) as f64;
            let tol = tol0 / (n * n);
            solve_inexact(
                &surrogate,
                psi,
                theta,
                sub_cons,
                projector.as_deref(),
                *budget,
                tol,
            )?
        }
    };
    Ok(BlockSolve {
        result,
        surrogate,
        projector,
    })
}

/// Retract block i along alpha * v and restore its constraint set where the
/// retraction can leave it. Fixed-rank steps stay on the reduced path;
/// Euclidean orthant blocks cannot exit (the subproblem already respects the
/// shifted orthant and steps are convex combinations), so no projection runs.
fn block_candidate(
    problem: &ProblemInstance,
    i: usize,
    block: &Matrix,
    factors: &Option<FixedRankFactors>,
    v: &TangentVector,
    alpha: f64,
) -> Result<(Matrix, Option<FixedRankFactors>), GeometryError> {
    let (spec, cons) = &problem.block_specs[i];
    match spec {
        ManifoldSpec::FixedRank { .. } => {
            let base = factors.as_ref().expect("fixed-rank blocks carry factors");
            let ft = match v {
                TangentVector::Factored(f) => f.clone(),
                TangentVector::Ambient(a) => tangent_project_factored(base, a),
            };
            let (y, yf) = retract_factored(base, &ft, alpha)?;
            if matches!(cons, ConstraintSpec::NonnegativeFixedRank) {
                let (y2, f2) = project_nonneg_fixed_rank(spec, &y)?;
                Ok((y2, Some(f2)))
            } else {
                Ok((y, Some(yf)))
            }
        }
        _ => {
            let y = retract(spec, block, v, alpha)?;
            Ok((y, None))
        }
    }
}

/// Marginal objective of block i with the candidate swapped in: smooth part
/// plus the block's own nonsmooth term (other blocks' terms cancel in
/// differences).
fn marginal_value(
    problem: &ProblemInstance,
    scratch: &mut BlockPoint,
    i: usize,
    candidate: Matrix,
) -> f64 {
    scratch.blocks[i] = candidate;
    problem.smooth_value(scratch) + problem.nonsmooth[i].evaluate(&scratch.blocks[i])
}

/// Backtracking step selection on the marginal objective of block i: the
/// largest alpha0 * gamma^k at which the constrained candidate exists and
/// decreases the marginal value by at least (rho * alpha / 4) |V|^2.
/// Returns 0 when the shrink cap is exhausted; the caller skips the block.
#[allow(clippy::too_many_arguments)]
pub fn line_search(
    problem: &ProblemInstance,
    i: usize,
    point: &BlockPoint,
    factors: &Option<FixedRankFactors>,
    v: &TangentVector,
    rho: f64,
    gamma: f64,
    alpha0: f64,
) -> f64 {
    let vsq = v.norm().powi(2);
    let mut scratch = point.clone();
    let current = marginal_value(problem, &mut scratch, i, point.blocks[i].clone());
    let mut alpha = alpha0;
    for _ in 0..=LINE_SEARCH_MAX_SHRINKS {
        if let Ok((cand, _)) = block_candidate(problem, i, &point.blocks[i], factors, v, alpha) {
            let val = marginal_value(problem, &mut scratch, i, cand);
            if val - current <= -(rho * alpha / 4.0) * vsq {
                return alpha;
            }
        }
        alpha *= gamma;
    }
    0.0
}

fn select_alpha(
    problem: &ProblemInstance,
    cfg: &SolverConfig,
    point: &BlockPoint,
    factors: &Option<FixedRankFactors>,
    i: usize,
    lambda: f64,
    v: &TangentVector,
) -> Result<f64, SolverError> {
    match cfg.step_mode {
        StepMode::Constant(a) => Ok(a),
        StepMode::TheoremRate { m2 } => {
            let (rows, cols) = problem.block_specs[i].0.ambient_shape();
            let lpsi = problem.nonsmooth[i].lipschitz(rows * cols);
            if !lpsi.is_finite() {
                return Err(SolverError::Config(format!(
                    "block {i} nonsmooth term has no Lipschitz constant; \
                     the rate-based step is undefined"
                )));
            }
            Ok(lambda / (lambda + 2.0 * lpsi * m2))
        }
        StepMode::LineSearch { gamma, rho } => {
            if v.norm() <= 1e-15 {
                return Ok(0.0);
            }
            Ok(line_search(problem, i, point, factors, v, rho, gamma, 1.0))
        }
    }
}

fn initial_factors(
    problem: &ProblemInstance,
    point: &BlockPoint,
) -> Result<Vec<Option<FixedRankFactors>>, SolverError> {
    problem
        .block_specs
        .iter()
        .zip(&point.blocks)
        .map(|((spec, _), x)| factorize(spec, x).map_err(SolverError::from))
        .collect()
}

fn finite_objective(problem: &ProblemInstance, point: &BlockPoint, iter: usize) -> Result<f64, SolverError> {
    let obj = problem.objective(point);
    if obj.is_finite() {
        Ok(obj)
    } else {
        Err(SolverError::NanObjective { iter })
    }
}

fn rel_error_or_nan(problem: &ProblemInstance, point: &BlockPoint) -> f64 {
    problem.relative_error(point).unwrap_or(f64::NAN)
}

/// Stationarity of the whole point: sum over blocks of the certified
/// first-order residual of each marginal subproblem, measured without
/// stepping. Shares the solve path with the main sweep.
fn measure_stationarity(
    problem: &ProblemInstance,
    point: &BlockPoint,
    factors: &[Option<FixedRankFactors>],
    cfg: &SolverConfig,
) -> Result<f64, SolverError> {
    let mut total = 0.0;
    for i in 0..problem.block_count() {
        let lambda = lambda_for(problem, point, i, &cfg.lambda_mode)?;
        let bs = solve_block(problem, point, &factors[i], i, lambda, &cfg.subproblem_mode, 0)?;
        total += stationarity_value(
            &bs.surrogate.rgrad,
            &bs.surrogate,
            &bs.result.v,
            bs.projector.as_deref(),
        );
    }
    Ok(total)
}

/// Cyclic tangential majorization-minimization over the problem's blocks.
///
/// Each sweep visits blocks in order: marginal Riemannian gradient at the
/// mixed point, prox-linear surrogate with weight lambda_i, exact or
/// certified-inexact tangent subproblem, step selection, metric-projection
/// retraction, and constraint restoration on nonnegative fixed-rank blocks.
/// delta_n is the worst per-block optimality-gap certificate of the sweep,
/// so the recorded trace carries its own inexactness budget. Record 0 is the
/// initial point with a measured stationarity and zero step fields.
pub fn tbmm_run(
    problem: &ProblemInstance,
    cfg: &SolverConfig,
    init: &BlockPoint,
) -> Result<RunTrace, SolverError> {
    cfg.validate(problem)?;
    if !matches!(cfg.noise, NoiseMode::None) {
        return Err(SolverError::Config(
            "gradient noise belongs to the gradient-descent driver".into(),
        ));
    }
    let specs: Vec<ManifoldSpec> = problem.block_specs.iter().map(|(s, _)| s.clone()).collect();
    let cons: Vec<ConstraintSpec> = problem.block_specs.iter().map(|(_, c)| *c).collect();
    check_point(&specs, &cons, init)?;

    let start = Instant::now();
    let m = problem.block_count();
    let mut point = init.clone();
    let mut factors = initial_factors(problem, &point)?;
    let mut records = Vec::with_capacity(cfg.max_iters + 1);
    let mut warnings = Vec::new();
    let mut descent_violations = Vec::new();

    let stat0 = measure_stationarity(problem, &point, &factors, cfg)?;
    records.push(IterRecord {
        iter: 0,
        elapsed: start.elapsed().as_secs_f64(),
        objective: finite_objective(problem, &point, 0)?,
        rel_error: rel_error_or_nan(problem, &point),
        stationarity: stat0,
        delta_n: 0.0,
        step_norms: vec![0.0; m],
        alpha_used: vec![0.0; m],
    });

    let mut termination = Termination::MaxIters;
    for n in 1..=cfg.max_iters {
        let mut gap_max = 0.0f64;
        let mut stat_sum = 0.0;
        let mut step_norms = vec![0.0; m];
        let mut alpha_used = vec![0.0; m];
        for i in 0..m {
            let lambda = lambda_for(problem, &point, i, &cfg.lambda_mode)?;
            let bs = solve_block(problem, &point, &factors[i], i, lambda, &cfg.subproblem_mode, n)?;
            let vnorm = bs.result.v.norm();
            stat_sum += stationarity_value(
                &bs.surrogate.rgrad,
                &bs.surrogate,
                &bs.result.v,
                bs.projector.as_deref(),
            );
            gap_max = gap_max.max(bs.result.gap_estimate);
            step_norms[i] = vnorm;
            let alpha = select_alpha(problem, cfg, &point, &factors[i], i, lambda, &bs.result.v)?;
            alpha_used[i] = alpha;
            if alpha == 0.0 {
                if vnorm > 1e-15 {
                    warnings.push(format!(
                        "iter {n} block {i}: line search exhausted, block kept"
                    ));
                }
                continue;
            }
            let (y, f2) =
                block_candidate(problem, i, &point.blocks[i], &factors[i], &bs.result.v, alpha)?;
            point.blocks[i] = y;
            if f2.is_some() {
                factors[i] = f2;
            }
        }
        let objective = finite_objective(problem, &point, n)?;
        let prev = records.last().expect("record 0 exists").objective;
        if objective > prev + m as f64 * gap_max + DESCENT_AUDIT_SLACK {
            descent_violations.push(n);
        }
        records.push(IterRecord {
            iter: n,
            elapsed: start.elapsed().as_secs_f64(),
            objective,
            rel_error: rel_error_or_nan(problem, &point),
            stationarity: stat_sum,
            delta_n: gap_max,
            step_norms,
            alpha_used,
        });
        if let Some(tol) = cfg.stationarity_tol {
            if stat_sum <= tol {
                termination = Termination::StationarityTol;
                break;
            }
        }
        if let Some(limit) = cfg.time_limit {
            if start.elapsed().as_secs_f64() >= limit {
                termination = Termination::TimeLimit;
                break;
            }
        }
    }
    Ok(RunTrace {
        records,
        final_point: point,
        termination,
        warnings,
        descent_violations,
    })
}

fn add_tangent(a: &TangentVector, b: &TangentVector, scale_b: f64) -> TangentVector {
    match (a, b) {
        (TangentVector::Ambient(x), TangentVector::Ambient(y)) => {
            TangentVector::Ambient(x + &y.mapv(|v| v * scale_b))
        }
        (TangentVector::Factored(x), TangentVector::Factored(y)) => {
            TangentVector::Factored(FactoredTangent {
                u: x.u.clone(),
                v: x.v.clone(),
                m: &x.m + &y.m.mapv(|v| v * scale_b),
                u_p: &x.u_p + &y.u_p.mapv(|v| v * scale_b),
                v_p: &x.v_p + &y.v_p.mapv(|v| v * scale_b),
            })
        }
        _ => panic!("mixed tangent representations at one base point"),
    }
}

/// Riemannian gradient descent on a single smooth block with an optional
/// summable tangent perturbation: at outer iteration n the gradient is
/// shifted by a uniformly random tangent direction of norm exactly c / n^2
/// before the 1/lambda step, and that norm is logged as the iteration's
/// delta_n. With c = 0 the trajectory is the exact method's.
pub fn inexact_rgd_run(
    problem: &ProblemInstance,
    cfg: &SolverConfig,
    init: &BlockPoint,
) -> Result<RunTrace, SolverError> {
    cfg.validate(problem)?;
    if problem.block_count() != 1 {
        return Err(SolverError::Config(
            "gradient descent driver expects a single block".into(),
        ));
    }
    if !matches!(problem.nonsmooth[0], NonsmoothTerm::None) {
        return Err(SolverError::Config(
            "gradient descent driver expects a smooth objective".into(),
        ));
    }
    let c = match cfg.noise {
        NoiseMode::None => 0.0,
        NoiseMode::GradNoise { c } => c,
    };
    let specs: Vec<ManifoldSpec> = problem.block_specs.iter().map(|(s, _)| s.clone()).collect();
    let cons: Vec<ConstraintSpec> = problem.block_specs.iter().map(|(_, c)| *c).collect();
    check_point(&specs, &cons, init)?;
    let spec = &problem.block_specs[0].0;
    let (rows, cols) = spec.ambient_shape();

    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut point = init.clone();
    let mut factors = initial_factors(problem, &point)?;
    let mut records = Vec::with_capacity(cfg.max_iters + 1);

    let project = |x: &Matrix,
                   f: &Option<FixedRankFactors>,
                   e: &Matrix|
     -> Result<TangentVector, SolverError> {
        match spec {
            ManifoldSpec::FixedRank { .. } => Ok(TangentVector::Factored(
                tangent_project_factored(f.as_ref().expect("factors"), e),
            )),
            _ => Ok(tangent_project_unchecked(spec, x, e)?),
        }
    };

    let g0 = problem.block_euclid_grad(&point, 0);
    let rg0 = project(&point.blocks[0], &factors[0], &g0)?;
    records.push(IterRecord {
        iter: 0,
        elapsed: start.elapsed().as_secs_f64(),
        objective: finite_objective(problem, &point, 0)?,
        rel_error: rel_error_or_nan(problem, &point),
        stationarity: rg0.norm(),
        delta_n: 0.0,
        step_norms: vec![0.0],
        alpha_used: vec![0.0],
    });

    let mut termination = Termination::MaxIters;
    for n in 1..=cfg.max_iters {
        let lambda = lambda_for(problem, &point, 0, &cfg.lambda_mode)?;
        let egrad = problem.block_euclid_grad(&point, 0);
        let rgrad = project(&point.blocks[0], &factors[0], &egrad)?;
        let delta = c / (n as f64 * n as f64);
        let used = if c == 0.0 {
            rgrad.clone()
        } else {
            // Uniform tangent direction: project a Gaussian and normalize.
            let mut dir;
            loop {
                let raw = gaussian_matrix(&mut rng, rows, cols);
                dir = project(&point.blocks[0], &factors[0], &raw)?;
                if dir.norm() > 1e-12 {
                    break;
                }
            }
            let unit = dir.scale(1.0 / dir.norm());
            add_tangent(&rgrad, &unit, delta)
        };
        let v = used.scale(-1.0 / lambda);
        let (y, f2) = block_candidate(problem, 0, &point.blocks[0], &factors[0], &v, 1.0)?;
        point.blocks[0] = y;
        if f2.is_some() {
            factors[0] = f2;
        }
        records.push(IterRecord {
            iter: n,
            elapsed: start.elapsed().as_secs_f64(),
            objective: finite_objective(problem, &point, n)?,
            rel_error: rel_error_or_nan(problem, &point),
            stationarity: rgrad.norm(),
            delta_n: delta,
            step_norms: vec![v.norm()],
            alpha_used: vec![1.0],
        });
        if let Some(limit) = cfg.time_limit {
            if start.elapsed().as_secs_f64() >= limit {
                termination = Termination::TimeLimit;
                break;
            }
        }
    }
    Ok(RunTrace {
        records,
        final_point: point,
        termination,
        warnings: Vec::new(),
        descent_violations: Vec::new(),
    })
}

/// Normalized iterative hard thresholding for the matrix-recovery family:
/// adaptive step alpha = |P_U g|^2 / |A(P_U g)|^2 with the left column-space
/// projector of the current iterate, then a rank-r truncation of the full
/// gradient step. A vanishing denominator falls back to alpha = 1 (logged).
///
/// The normalized alpha is exact along the column-space component of the
/// gradient but can overshoot the out-of-space component badly enough to
/// push the truncated iterate uphill. The trial step is therefore halved
/// until alpha |A dX|^2 <= |dX|^2 for the realized move dX; combined with
/// the truncation optimality bound <g, dX> <= -|dX|^2 / 2 alpha this gives
/// f(X') - f(X) <= (|A dX|^2 - |dX|^2 / alpha) / 2 <= 0, so accepted steps
/// never ascend. `alpha_used` records the accepted value.
pub fn niht_run(
    problem: &ProblemInstance,
    max_iters: usize,
    init: &BlockPoint,
    _seed: u64,
) -> Result<RunTrace, SolverError> {
    let op: &SensingOperator = problem
        .sensing()
        .ok_or_else(|| SolverError::Config("hard thresholding needs a sensing operator".into()))?;
    if problem.block_count() != 1 {
        return Err(SolverError::Config("hard thresholding is single-block".into()));
    }
    let spec = &problem.block_specs[0].0;
    if !matches!(spec, ManifoldSpec::FixedRank { .. }) {
        return Err(SolverError::Config(
            "hard thresholding expects a fixed-rank block".into(),
        ));
    }
    let start = Instant::now();
    let mut point = init.clone();
    let mut factors = initial_factors(problem, &point)?
        .pop()
        .flatten()
        .expect("fixed-rank factors");
    let mut records = Vec::with_capacity(max_iters + 1);
    let mut warnings = Vec::new();

    let g0 = problem.block_euclid_grad(&point, 0);
    records.push(IterRecord {
        iter: 0,
        elapsed: start.elapsed().as_secs_f64(),
        objective: finite_objective(problem, &point, 0)?,
        rel_error: rel_error_or_nan(problem, &point),
        stationarity: tangent_project_factored(&factors, &g0).norm(),
        delta_n: 0.0,
        step_norms: vec![0.0],
        alpha_used: vec![0.0],
    });

    let mut termination = Termination::MaxIters;
    let _ = &mut termination;
    for n in 1..=max_iters {
        let sumsq = |m: &Matrix| m.iter().map(|v| v * v).sum::<f64>();
        let g = problem.block_euclid_grad(&point, 0);
        let stat = tangent_project_factored(&factors, &g).norm();
        let pu_g = factors.u.dot(&factors.u.t().dot(&g));
        let num = sumsq(&pu_g);
        let den = op.apply(&pu_g).iter().map(|v| v * v).sum::<f64>();
        let mut alpha = if den == 0.0 {
            warnings.push(format!(
                "iter {n}: column-space gradient annihilated, step reset to 1"
            ));
            1.0
        } else {
            num / den
        };
        let mut halvings = 0usize;
        let (objective, step) = loop {
            let raw = &point.blocks[0] - &g.mapv(|v| v * alpha);
            let (y, f2) = project_manifold(spec, &raw)?;
            let dx = &y - &point.blocks[0];
            let a_dx = op.apply(&dx).iter().map(|v| v * v).sum::<f64>();
            let ok = alpha * a_dx <= sumsq(&dx);
            if ok || halvings == 60 {
                if !ok {
                    warnings.push(format!("iter {n}: step control exhausted 60 halvings"));
                }
                let step = fro_norm(&dx);
                point.blocks[0] = y;
                factors = f2.expect("fixed-rank projection returns factors");
                break (finite_objective(problem, &point, n)?, step);
            }
            alpha *= 0.5;
            halvings += 1;
        };
        records.push(IterRecord {
            iter: n,
            elapsed: start.elapsed().as_secs_f64(),
            objective,
            rel_error: rel_error_or_nan(problem, &point),
            stationarity: stat,
            delta_n: 0.0,
            step_norms: vec![step],
            alpha_used: vec![alpha],
        });
    }
    Ok(RunTrace {
        records,
        final_point: point,
        termination,
        warnings,
        descent_violations: Vec::new(),
    })
}

/// Euclidean block projected gradient descent: per block, a full 1/lambda
/// gradient step in the ambient space, metric projection onto the manifold
/// (a dense truncated SVD for fixed-rank blocks, every step), then the
/// constraint projection. Stationarity is the gradient-mapping norm
/// lambda * |new - old| summed over blocks.
pub fn block_pgd_run(
    problem: &ProblemInstance,
    cfg: &SolverConfig,
    init: &BlockPoint,
) -> Result<RunTrace, SolverError> {
    cfg.validate(problem)?;
    if !matches!(cfg.noise, NoiseMode::None) {
        return Err(SolverError::Config(
            "gradient noise belongs to the gradient-descent driver".into(),
        ));
    }
    let specs: Vec<ManifoldSpec> = problem.block_specs.iter().map(|(s, _)| s.clone()).collect();
    let cons: Vec<ConstraintSpec> = problem.block_specs.iter().map(|(_, c)| *c).collect();
    check_point(&specs, &cons, init)?;

    let start = Instant::now();
    let m = problem.block_count();
    let mut point = init.clone();
    let mut records = Vec::with_capacity(cfg.max_iters + 1);

    let pgd_target = |point: &BlockPoint, i: usize, lambda: f64| -> Result<Matrix, SolverError> {
        let g = problem.block_euclid_grad(point, i);
        let raw = &point.blocks[i] - &g.mapv(|v| v / lambda);
        let (spec, cspec) = &problem.block_specs[i];
        let (proj, _) = project_manifold(spec, &raw)?;
        Ok(project_constraint(*cspec, spec, &proj)?)
    };

    // Record 0 probes the gradient mapping without moving.
    let mut stat0 = 0.0;
    for i in 0..m {
        let lambda = lambda_for(problem, &point, i, &cfg.lambda_mode)?;
        let target = pgd_target(&point, i, lambda)?;
        stat0 += lambda * fro_norm(&(&target - &point.blocks[i]));
    }
    records.push(IterRecord {
        iter: 0,
        elapsed: start.elapsed().as_secs_f64(),
        objective: finite_objective(problem, &point, 0)?,
        rel_error: rel_error_or_nan(problem, &point),
        stationarity: stat0,
        delta_n: 0.0,
        step_norms: vec![0.0; m],
        alpha_used: vec![0.0; m],
    });

    let mut termination = Termination::MaxIters;
    for n in 1..=cfg.max_iters {
        let mut stat_sum = 0.0;
        let mut step_norms = vec![0.0; m];
        let mut alpha_used = vec![0.0; m];
        for i in 0..m {
            let lambda = lambda_for(problem, &point, i, &cfg.lambda_mode)?;
            let target = pgd_target(&point, i, lambda)?;
            let step = fro_norm(&(&target - &point.blocks[i]));
            stat_sum += lambda * step;
            step_norms[i] = step;
            alpha_used[i] = 1.0 / lambda;
            point.blocks[i] = target;
        }
        records.push(IterRecord {
            iter: n,
            elapsed: start.elapsed().as_secs_f64(),
            objective: finite_objective(problem, &point, n)?,
            rel_error: rel_error_or_nan(problem, &point),
            stationarity: stat_sum,
            delta_n: 0.0,
            step_norms,
            alpha_used,
        });
        if let Some(limit) = cfg.time_limit {
            if start.elapsed().as_secs_f64() >= limit {
                termination = Termination::TimeLimit;
                break;
            }
        }
    }
    Ok(RunTrace {
        records,
        final_point: point,
        termination,
        warnings: Vec::new(),
        descent_violations: Vec::new(),
    })
}

/// Proximal gradient on a single Stiefel block, written as a tBMM run.
///
/// The caller's lambda follows the update convention that puts a full
/// lambda * |V|^2 (no half) in the subproblem, so the internal quadratic
/// weight is doubled: with psi = 0 the method reduces to gradient descent
/// with step 1/(2 lambda).
pub fn stiefel_proxgrad_run(
    problem: &ProblemInstance,
    cfg: &SolverConfig,
    init: &BlockPoint,
) -> Result<RunTrace, SolverError> {
    if problem.block_count() != 1
        || !matches!(problem.block_specs[0].0, ManifoldSpec::Stiefel { .. })
    {
        return Err(SolverError::Config(
            "proximal gradient driver expects a single Stiefel block".into(),
        ));
    }
    let mut inner = cfg.clone();
    inner.lambda_mode = match &cfg.lambda_mode {
        LambdaMode::Fixed(ls) => LambdaMode::Fixed(ls.iter().map(|l| 2.0 * l).collect()),
        LambdaMode::FromLipschitz { safety } => LambdaMode::FromLipschitz {
            safety: 2.0 * safety,
        },
    };
    tbmm_run(problem, &inner, init)
}

/// Running minimum of the stationarity column and the least-squares slope of
/// log(min stationarity) against log(iteration) over the second half of the
/// records, the empirical convergence-rate read-out.
#[derive(Debug, Clone)]
pub struct RateCurve {
    pub iters: Vec<usize>,
    pub min_stationarity: Vec<f64>,
    pub slope: f64,
}

pub fn min_stationarity_curve(trace: &RunTrace) -> Result<RateCurve, SolverError> {
    let n = trace.records.len();
    if n < 10 {
        return Err(SolverError::Config(format!(
            "rate curve needs at least 10 records, got {n}"
        )));
    }
    let mut iters = Vec::with_capacity(n);
    let mut mins = Vec::with_capacity(n);
    let mut best = f64::INFINITY;
    for r in &trace.records {
        best = best.min(r.stationarity);
        iters.push(r.iter);
        mins.push(best);
    }
    // Least squares over the second half, in log-log coordinates. Iteration 0
    // cannot appear there (records are in iteration order).
    let half = n / 2;
    let xs: Vec<f64> = iters[half..].iter().map(|&i| (i as f64).ln()).collect();
    let ys: Vec<f64> = mins[half..]
        .iter()
        .map(|&v| v.max(f64::MIN_POSITIVE).ln())
        .collect();
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = if sxx == 0.0 { 0.0 } else { sxy / sxx };
    Ok(RateCurve {
        iters,
        min_stationarity: mins,
        slope,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::svd_thin;
    use crate::problems::{
        make_matrix_recovery, make_ncpd, make_nmf, make_quadratic, make_quadratic_with_targets,
        make_sparse_pca,
    };

    fn exact_cfg(iters: usize, lambdas: Vec<f64>) -> SolverConfig {
        SolverConfig {
            max_iters: iters,
            lambda_mode: LambdaMode::Fixed(lambdas),
            ..SolverConfig::default()
        }
    }

    #[test]
    fn quadratic_converges_in_one_iteration() {
        let prob = make_quadratic(&[(3, 2)], 1.0, 5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let init = prob.init_point(&mut rng);
        let trace = tbmm_run(&prob, &exact_cfg(3, vec![1.0]), &init).unwrap();
        assert!(trace.records[1].objective <= 1e-24);
        assert!(trace.records[1].rel_error <= 1e-12);
        assert!(trace.descent_violations.is_empty());
    }

    #[test]
    fn separable_blocks_reach_their_targets_in_one_sweep() {
        let zeros = vec![Matrix::zeros((2, 2)), Matrix::zeros((3, 1))];
        let prob = make_quadratic_with_targets(zeros, 1.0).unwrap();
        let init = BlockPoint::new(vec![
            Matrix::from_elem((2, 2), 2.0),
            Matrix::from_elem((3, 1), -1.5),
        ]);
        let trace = tbmm_run(&prob, &exact_cfg(1, vec![1.0, 1.0]), &init).unwrap();
        assert_eq!(trace.records[1].objective, 0.0);
        for b in &trace.final_point.blocks {
            assert_eq!(fro_norm(b), 0.0);
        }
    }

    #[test]
    fn pgd_matches_tbmm_on_unconstrained_euclidean_blocks() {
        let prob = make_quadratic(&[(4, 3), (2, 5)], 1.0, 9).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let init = prob.init_point(&mut rng);
        let cfg = exact_cfg(20, vec![3.0, 3.0]);
        let a = tbmm_run(&prob, &cfg, &init).unwrap();
        let b = block_pgd_run(&prob, &cfg, &init).unwrap();
        for (ra, rb) in a.records.iter().zip(&b.records) {
            assert!((ra.objective - rb.objective).abs() <= 1e-14 * (1.0 + ra.objective.abs()));
        }
    }

    #[test]
    fn zero_noise_gradient_descent_matches_exact_tbmm() {
        let prob = make_matrix_recovery(10, 6, 2, 40, 11).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let init = prob.init_point(&mut rng);
        let cfg = SolverConfig {
            max_iters: 50,
            noise: NoiseMode::GradNoise { c: 0.0 },
            ..SolverConfig::default()
        };
        let rgd = inexact_rgd_run(&prob, &cfg, &init).unwrap();
        let cfg2 = SolverConfig {
            max_iters: 50,
            ..SolverConfig::default()
        };
        let bmm = tbmm_run(&prob, &cfg2, &init).unwrap();
        for (ra, rb) in rgd.records.iter().zip(&bmm.records) {
            assert!((ra.objective - rb.objective).abs() <= 1e-12 * (1.0 + ra.objective.abs()));
        }
    }

    #[test]
    fn gradient_noise_norms_follow_the_schedule() {
        let prob = make_matrix_recovery(8, 5, 2, 30, 13).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let init = prob.init_point(&mut rng);
        let c = 0.7;
        let cfg = SolverConfig {
            max_iters: 6,
            noise: NoiseMode::GradNoise { c },
            ..SolverConfig::default()
        };
        let trace = inexact_rgd_run(&prob, &cfg, &init).unwrap();
        assert_eq!(trace.records[0].delta_n, 0.0);
        assert_eq!(trace.records[1].delta_n, c);
        assert_eq!(trace.records[4].delta_n, c / 16.0);
        let total: f64 = trace.records.iter().map(|r| r.delta_n).sum();
        let expect: f64 = (1..=6).map(|k| c / (k as f64 * k as f64)).sum();
        assert!((total - expect).abs() <= 1e-15);
    }

    #[test]
    fn niht_identity_sensing_has_unit_steps() {
        let prob = crate::problems::identity_sensing_recovery(5, 4, 2, 17);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let init = prob.init_point(&mut rng);
        let trace = niht_run(&prob, 10, &init, 0).unwrap();
        for r in &trace.records[1..] {
            assert!((r.alpha_used[0] - 1.0).abs() <= 1e-12);
        }
        // Identity sensing recovers exactly.
        assert!(trace.records.last().unwrap().rel_error <= 1e-10);
    }

    #[test]
    fn niht_is_stationary_at_the_ground_truth() {
        let prob = make_matrix_recovery(8, 6, 2, 40, 19).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let feas = prob.init_point(&mut rng);
        let _ = feas;
        let x_star = {
            // Recover the truth through a zero-residual probe: relative error
            // vanishes only there, so reconstruct from the sensing fit.
            // The constructor's stream: 40 sensing matrices, then G1, G2.
            let mut r = ChaCha8Rng::seed_from_u64(19);
            for _ in 0..40 {
                let _ = gaussian_matrix(&mut r, 8, 6);
            }
            let g1 = gaussian_matrix(&mut r, 8, 2);
            let g2 = gaussian_matrix(&mut r, 6, 2);
            g1.dot(&g2.t())
        };
        let init = BlockPoint::new(vec![x_star.clone()]);
        let trace = niht_run(&prob, 5, &init, 0).unwrap();
        let moved = fro_norm(&(&trace.final_point.blocks[0] - &x_star));
        assert!(moved <= 1e-10 * (1.0 + fro_norm(&x_star)));
        assert!(!trace.warnings.is_empty());
    }

    #[test]
    fn line_search_accepts_unit_step_on_a_gentle_quadratic() {
        let prob = make_quadratic_with_targets(vec![Matrix::zeros((3, 1))], 1.0).unwrap();
        let point = BlockPoint::new(vec![Matrix::from_elem((3, 1), 1.0)]);
        let g = prob.block_euclid_grad(&point, 0);
        let v = TangentVector::Ambient(g.mapv(|x| -x));
        let alpha = line_search(&prob, 0, &point, &None, &v, 1.0, 0.5, 1.0);
        assert_eq!(alpha, 1.0);
    }

    #[test]
    fn line_search_shrinks_exactly_twice_when_built_to() {
        // On f = |x|^2/2 with v = -x the decrease at step alpha is
        // (alpha - alpha^2/2)|x|^2, so the test passes iff 1 - alpha/2 >= rho/4.
        // rho = 3.2 fails at alpha 1 and 0.5 and passes at 0.25.
        let prob = make_quadratic_with_targets(vec![Matrix::zeros((2, 1))], 1.0).unwrap();
        let point = BlockPoint::new(vec![Matrix::from_elem((2, 1), 1.0)]);
        let g = prob.block_euclid_grad(&point, 0);
        let v = TangentVector::Ambient(g.mapv(|x| -x));
        let alpha = line_search(&prob, 0, &point, &None, &v, 3.2, 0.5, 1.0);
        assert_eq!(alpha, 0.25);
    }

    #[test]
    fn line_search_rejects_ascent_directions() {
        let prob = make_quadratic_with_targets(vec![Matrix::zeros((2, 1))], 1.0).unwrap();
        let point = BlockPoint::new(vec![Matrix::from_elem((2, 1), 1.0)]);
        let g = prob.block_euclid_grad(&point, 0);
        let v = TangentVector::Ambient(g.clone());
        let alpha = line_search(&prob, 0, &point, &None, &v, 1.0, 0.5, 1.0);
        assert_eq!(alpha, 0.0);
    }

    #[test]
    fn rate_step_matches_its_formula_and_caps_alpha() {
        let prob = make_sparse_pca(8, 3, 1e-2, 23).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let init = prob.init_point(&mut rng);
        let lambda = 40.0;
        let cfg = SolverConfig {
            max_iters: 5,
            step_mode: StepMode::TheoremRate { m2: 1.0 },
            lambda_mode: LambdaMode::Fixed(vec![lambda]),
            subproblem_mode: SubproblemMode::Inexact {
                tol0: 1e-2,
                budget: 40,
            },
            ..SolverConfig::default()
        };
        let trace = tbmm_run(&prob, &cfg, &init).unwrap();
        let lpsi = 1e-2 * ((8.0f64 * 3.0).sqrt());
        let cap = lambda / (lambda + 2.0 * lpsi);
        for r in &trace.records[1..] {
            assert!((r.alpha_used[0] - cap).abs() <= 1e-15);
            assert!(r.alpha_used[0] <= cap + 1e-15);
        }
    }

    #[test]
    fn stiefel_driver_stays_at_a_stationary_frame() {
        let prob = make_sparse_pca(7, 2, 0.0, 29).unwrap();
        // Eigenvector frame of the Gram matrix: stationary for the smooth
        // part restricted to the manifold.
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let a = gaussian_matrix(&mut rng, 7, 7);
        let q = a.dot(&a.t());
        let s = svd_thin(&q).unwrap();
        let x0 = s.u.slice(ndarray::s![.., ..2]).to_owned();
        let init = BlockPoint::new(vec![x0.clone()]);
        let cfg = SolverConfig {
            max_iters: 10,
            lambda_mode: LambdaMode::Fixed(vec![200.0]),
            subproblem_mode: SubproblemMode::Inexact {
                tol0: 1e-6,
                budget: 80,
            },
            ..SolverConfig::default()
        };
        let trace = stiefel_proxgrad_run(&prob, &cfg, &init).unwrap();
        let moved = fro_norm(&(&trace.final_point.blocks[0] - &x0));
        assert!(moved <= 1e-9, "moved {moved:.3e}");
    }

    #[test]
    fn stiefel_driver_with_zero_weight_is_gradient_descent_at_half_step() {
        let prob = make_sparse_pca(6, 2, 0.0, 31).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let init = prob.init_point(&mut rng);
        let lambda = 150.0;
        let cfg = SolverConfig {
            max_iters: 8,
            lambda_mode: LambdaMode::Fixed(vec![lambda]),
            subproblem_mode: SubproblemMode::Inexact {
                tol0: 0.0,
                budget: 60,
            },
            ..SolverConfig::default()
        };
        let a = stiefel_proxgrad_run(&prob, &cfg, &init).unwrap();
        // Reference: plain tBMM with the doubled weight, exact subproblem.
        let cfg2 = SolverConfig {
            max_iters: 8,
            lambda_mode: LambdaMode::Fixed(vec![2.0 * lambda]),
            ..SolverConfig::default()
        };
        let b = tbmm_run(&prob, &cfg2, &init).unwrap();
        for (ra, rb) in a.records.iter().zip(&b.records) {
            assert!((ra.objective - rb.objective).abs() <= 1e-9 * (1.0 + ra.objective.abs()));
        }
    }

    #[test]
    fn constrained_factorization_run_is_feasible_and_monotone() {
        let prob = make_nmf(12, 10, 6, 3, 1e-2, true, 37).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let init = prob.init_point(&mut rng);
        let cfg = SolverConfig {
            max_iters: 30,
            step_mode: StepMode::LineSearch {
                gamma: 0.5,
                rho: 1e-4,
            },
            lambda_mode: LambdaMode::FromLipschitz { safety: 1.05 },
            subproblem_mode: SubproblemMode::Inexact {
                tol0: 1e-2,
                budget: 40,
            },
            ..SolverConfig::default()
        };
        let trace = tbmm_run(&prob, &cfg, &init).unwrap();
        assert!(trace.descent_violations.is_empty());
        let specs: Vec<_> = prob.block_specs.iter().map(|(s, _)| s.clone()).collect();
        let cons: Vec<_> = prob.block_specs.iter().map(|(_, c)| *c).collect();
        check_point(&specs, &cons, &trace.final_point).unwrap();
    }

    #[test]
    fn pgd_objective_is_nonincreasing_with_honest_lipschitz_weights() {
        let prob = make_nmf(12, 10, 6, 3, 0.0, true, 41).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let init = prob.init_point(&mut rng);
        let cfg = SolverConfig {
            max_iters: 30,
            lambda_mode: LambdaMode::FromLipschitz { safety: 1.05 },
            ..SolverConfig::default()
        };
        let trace = block_pgd_run(&prob, &cfg, &init).unwrap();
        for w in trace.records.windows(2) {
            assert!(w[1].objective <= w[0].objective + 1e-9 * (1.0 + w[0].objective.abs()));
        }
    }

    #[test]
    fn identical_configs_reproduce_the_objective_column() {
        let prob = make_ncpd((10, 8, 6), 4, 2, [1e-2; 3], true, 43).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let init = prob.init_point(&mut rng);
        let cfg = SolverConfig {
            max_iters: 15,
            step_mode: StepMode::LineSearch {
                gamma: 0.5,
                rho: 1e-4,
            },
            lambda_mode: LambdaMode::FromLipschitz { safety: 1.05 },
            subproblem_mode: SubproblemMode::Inexact {
                tol0: 1e-2,
                budget: 30,
            },
            seed: 77,
            ..SolverConfig::default()
        };
        let a = tbmm_run(&prob, &cfg, &init).unwrap();
        let b = tbmm_run(&prob, &cfg, &init).unwrap();
        assert_eq!(a.records.len(), b.records.len());
        for (ra, rb) in a.records.iter().zip(&b.records) {
            assert!((ra.objective - rb.objective).abs() <= 1e-12);
        }
        // Noise path reproduces too.
        let prob2 = make_matrix_recovery(8, 5, 2, 30, 47).unwrap();
        let init2 = prob2.init_point(&mut rng);
        let cfg2 = SolverConfig {
            max_iters: 10,
            noise: NoiseMode::GradNoise { c: 1.0 },
            seed: 123,
            ..SolverConfig::default()
        };
        let a2 = inexact_rgd_run(&prob2, &cfg2, &init2).unwrap();
        let b2 = inexact_rgd_run(&prob2, &cfg2, &init2).unwrap();
        for (ra, rb) in a2.records.iter().zip(&b2.records) {
            assert_eq!(ra.objective, rb.objective);
        }
    }

    #[test]
    fn rate_curve_slopes_match_synthetic_sequences() {
        let dummy_point = BlockPoint::new(vec![Matrix::zeros((1, 1))]);
        let mk = |stats: Vec<f64>| RunTrace {
            records: stats
                .iter()
                .enumerate()
                .map(|(i, &s)| IterRecord {
                    iter: i,
                    elapsed: i as f64,
                    objective: 0.0,
                    rel_error: 0.0,
                    stationarity: s,
                    delta_n: 0.0,
                    step_norms: vec![0.0],
                    alpha_used: vec![0.0],
                })
                .collect(),
            final_point: dummy_point.clone(),
            termination: Termination::MaxIters,
            warnings: Vec::new(),
            descent_violations: Vec::new(),
        };
        let constant = mk(vec![2.5; 40]);
        let slope0 = min_stationarity_curve(&constant).unwrap().slope;
        assert!(slope0.abs() <= 1e-12);
        let inv_sqrt = mk((0..200)
            .map(|i| if i == 0 { 10.0 } else { 1.0 / (i as f64).sqrt() })
            .collect());
        let slope = min_stationarity_curve(&inv_sqrt).unwrap().slope;
        assert!((slope + 0.5).abs() <= 1e-6, "slope {slope}");
        assert!(min_stationarity_curve(&mk(vec![1.0; 5])).is_err());
    }

    #[test]
    fn matrix_recovery_run_descends_and_stays_on_the_manifold() {
        let prob = make_matrix_recovery(12, 8, 2, 60, 53).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let init = prob.init_point(&mut rng);
        let cfg = SolverConfig {
            max_iters: 60,
            ..SolverConfig::default()
        };
        let trace = tbmm_run(&prob, &cfg, &init).unwrap();
        assert!(trace.descent_violations.is_empty());
        assert!(trace.records.last().unwrap().rel_error < trace.records[0].rel_error);
        let specs: Vec<_> = prob.block_specs.iter().map(|(s, _)| s.clone()).collect();
        let cons: Vec<_> = prob.block_specs.iter().map(|(_, c)| *c).collect();
        check_point(&specs, &cons, &trace.final_point).unwrap();
        assert_eq!(trace.termination, Termination::MaxIters);
    }

    #[test]
    fn rejects_misconfigured_runs() {
        let prob = make_quadratic(&[(2, 2)], 1.0, 59).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let init = prob.init_point(&mut rng);
        let mut cfg = SolverConfig::default();
        cfg.step_mode = StepMode::Constant(1.5);
        assert!(tbmm_run(&prob, &cfg, &init).is_err());
        let mut cfg = SolverConfig::default();
        cfg.lambda_mode = LambdaMode::Fixed(vec![1.0, 1.0]);
        assert!(tbmm_run(&prob, &cfg, &init).is_err());
        let mut cfg = SolverConfig::default();
        cfg.noise = NoiseMode::GradNoise { c: 1.0 };
        assert!(tbmm_run(&prob, &cfg, &init).is_err());
        assert!(niht_run(&prob, 5, &init, 0).is_err());
    }
}

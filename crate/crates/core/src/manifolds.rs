//! Embedded-submanifold geometry.
//!
//! Four block geometries: Euclidean matrices, the unit sphere (points are
//! n x 1 column matrices), the Stiefel manifold of orthonormal frames, and
//! fixed-rank matrices. Retractions are metric projections throughout:
//! normalization on the sphere, the polar factor on Stiefel, truncated SVD on
//! fixed-rank. Fixed-rank tangent vectors are kept in the factored form
//! (M, U_p, V_p) around a cached thin SVD of the base point, so a retraction
//! costs one (2r) x (2r) SVD plus two skinny orthonormalizations instead of a
//! dense one; the dense path exists for diagnostics and is counted separately
//! (see [`ops_counter`]).

use crate::linalg::{
    fro_norm, orthonormalize_against, svd_thin, svd_truncated, LinalgError, Matrix,
};
use ndarray::Array1;
use thiserror::Error;

/// Max-abs tolerance for manifold membership checks.
pub const MEMBERSHIP_TOL: f64 = 1e-8;
/// Relative singular-value floor: sigma_r <= RANK_TOL * sigma_1 counts as a
/// rank collapse.
pub const RANK_TOL: f64 = 1e-10;
/// Strict elementwise floor for nonnegative blocks.
pub const ORTHANT_TOL: f64 = 1e-12;
/// Minimum rounds of [clip to the orthant, truncate to rank r] in the
/// nonnegative fixed-rank projection.
pub const NONNEG_ALTERNATION_ROUNDS: usize = 5;
/// Round cap for that alternation. The loop runs until the truncated iterate
/// clears [`ORTHANT_TOL`]; the alternation contracts geometrically in
/// practice (observed factor ~0.6 per round on dense uniform inputs), so the
/// cap is generous.
pub const NONNEG_ALTERNATION_MAX_ROUNDS: usize = 300;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("point is not on the manifold: {0}")]
    OffManifold(String),
    #[error("retraction failed: {0}")]
    RetractionFailure(String),
    #[error("rank collapse: sigma_r = {sigma_r:.3e} below {floor:.3e}")]
    RankCollapse { sigma_r: f64, floor: f64 },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Which manifold a block lives on. Dimensions are validated at
/// construction via [`ManifoldSpec::validate`].
#[derive(Debug, Clone, PartialEq)]
pub enum ManifoldSpec {
    /// All of R^{rows x cols}.
    Euclidean { rows: usize, cols: usize },
    /// Unit vectors in R^dim, stored as dim x 1 matrices.
    Sphere { dim: usize },
    /// Matrices with orthonormal columns, rows >= cols >= 1.
    Stiefel { rows: usize, cols: usize },
    /// Matrices of rank exactly `rank`, 1 <= rank <= min(rows, cols).
    FixedRank { rows: usize, cols: usize, rank: usize },
}

impl ManifoldSpec {
    pub fn validate(&self) -> Result<(), GeometryError> {
        let ok = match *self {
            ManifoldSpec::Euclidean { rows, cols } => rows >= 1 && cols >= 1,
            ManifoldSpec::Sphere { dim } => dim >= 1,
            ManifoldSpec::Stiefel { rows, cols } => rows >= cols && cols >= 1,
            ManifoldSpec::FixedRank { rows, cols, rank } => {
                rank >= 1 && rank <= rows.min(cols)
            }
        };
        if ok {
            Ok(())
        } else {
            Err(GeometryError::ShapeMismatch(format!("bad spec {self:?}")))
        }
    }

    pub fn ambient_shape(&self) -> (usize, usize) {
        match *self {
            ManifoldSpec::Euclidean { rows, cols } => (rows, cols),
            ManifoldSpec::Sphere { dim } => (dim, 1),
            ManifoldSpec::Stiefel { rows, cols } => (rows, cols),
            ManifoldSpec::FixedRank { rows, cols, .. } => (rows, cols),
        }
    }
}

/// Side constraint intersected with the manifold.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstraintSpec {
    WholeManifold,
    /// Elementwise x >= 0; Euclidean blocks only.
    NonnegativeOrthant,
    /// Fixed-rank blocks intersected with the nonnegative orthant, handled by
    /// alternating projection.
    NonnegativeFixedRank,
}

/// Cached thin SVD of a fixed-rank point. Solvers carry this across
/// iterations so the per-step cost stays at the reduced SVD.
#[derive(Debug, Clone)]
pub struct FixedRankFactors {
    pub u: Matrix,
    pub sigma: Array1<f64>,
    pub v: Matrix,
}

impl FixedRankFactors {
    pub fn reconstruct(&self) -> Matrix {
        let mut us = self.u.clone();
        for j in 0..self.sigma.len() {
            let s = self.sigma[j];
            us.column_mut(j).mapv_inplace(|x| x * s);
        }
        us.dot(&self.v.t())
    }
}

/// Tangent vector in factored form at a fixed-rank point x = U S V^T:
/// eta = U M V^T + U_p V^T + U V_p^T with U^T U_p = 0 and V^T V_p = 0.
#[derive(Debug, Clone)]
pub struct FactoredTangent {
    pub u: Matrix,
    pub v: Matrix,
    pub m: Matrix,
    pub u_p: Matrix,
    pub v_p: Matrix,
}

impl FactoredTangent {
    pub fn to_ambient(&self) -> Matrix {
        let mut amb = self.u.dot(&self.m.dot(&self.v.t()));
        amb = amb + self.u_p.dot(&self.v.t());
        amb + self.u.dot(&self.v_p.t())
    }

    /// Frobenius norm; the three components are mutually orthogonal.
    pub fn norm(&self) -> f64 {
        (fro_norm(&self.m).powi(2) + fro_norm(&self.u_p).powi(2) + fro_norm(&self.v_p).powi(2))
            .sqrt()
    }

    pub fn scale(&self, a: f64) -> FactoredTangent {
        FactoredTangent {
            u: self.u.clone(),
            v: self.v.clone(),
            m: self.m.mapv(|x| x * a),
            u_p: self.u_p.mapv(|x| x * a),
            v_p: self.v_p.mapv(|x| x * a),
        }
    }
}

/// A tangent vector, either as a dense ambient matrix or factored around a
/// fixed-rank base. The factored form converts losslessly to ambient.
#[derive(Debug, Clone)]
pub enum TangentVector {
    Ambient(Matrix),
    Factored(FactoredTangent),
}

impl TangentVector {
    pub fn to_ambient(&self) -> Matrix {
        match self {
            TangentVector::Ambient(m) => m.clone(),
            TangentVector::Factored(f) => f.to_ambient(),
        }
    }

    pub fn norm(&self) -> f64 {
        match self {
            TangentVector::Ambient(m) => fro_norm(m),
            TangentVector::Factored(f) => f.norm(),
        }
    }

    pub fn scale(&self, a: f64) -> TangentVector {
        match self {
            TangentVector::Ambient(m) => TangentVector::Ambient(m.mapv(|x| x * a)),
            TangentVector::Factored(f) => TangentVector::Factored(f.scale(a)),
        }
    }
}

/// One point per block. Blocks are plain dense matrices; fixed-rank factor
/// caches live in the solvers, not here.
#[derive(Debug, Clone)]
pub struct BlockPoint {
    pub blocks: Vec<Matrix>,
}

impl BlockPoint {
    pub fn new(blocks: Vec<Matrix>) -> Self {
        BlockPoint { blocks }
    }
}

/// Operation counters for SVD-bearing geometry steps. The interesting
/// distinction is dense truncations of a full ambient matrix versus the
/// reduced (2r) x (2r) factored-retraction path; tests assert that the block
/// MM driver stays on the reduced path while the projected-gradient baseline
/// pays the dense cost every step.
pub mod ops_counter {
    use std::sync::atomic::{AtomicU64, Ordering};

    static DENSE_SVD: AtomicU64 = AtomicU64::new(0);
    static REDUCED_SVD: AtomicU64 = AtomicU64::new(0);

    pub fn reset() {
        DENSE_SVD.store(0, Ordering::Relaxed);
        REDUCED_SVD.store(0, Ordering::Relaxed);
    }

    /// (dense, reduced) counts since the last reset.
    pub fn snapshot() -> (u64, u64) {
        (
            DENSE_SVD.load(Ordering::Relaxed),
            REDUCED_SVD.load(Ordering::Relaxed),
        )
    }

    pub(crate) fn record_dense() {
        DENSE_SVD.fetch_add(1, Ordering::Relaxed);
    }

    pub(crate) fn record_reduced() {
        REDUCED_SVD.fetch_add(1, Ordering::Relaxed);
    }
}

fn check_shape(spec: &ManifoldSpec, x: &Matrix) -> Result<(), GeometryError> {
    let want = spec.ambient_shape();
    if x.dim() != want {
        return Err(GeometryError::ShapeMismatch(format!(
            "expected {want:?}, got {:?}",
            x.dim()
        )));
    }
    Ok(())
}

/// Manifold membership to [`MEMBERSHIP_TOL`]. For fixed-rank this factorizes
/// the point; solvers on the hot path use their cached factors instead.
pub fn check_membership(spec: &ManifoldSpec, x: &Matrix) -> Result<(), GeometryError> {
    spec.validate()?;
    check_shape(spec, x)?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(GeometryError::OffManifold("non-finite entries".into()));
    }
    match *spec {
        ManifoldSpec::Euclidean { .. } => Ok(()),
        ManifoldSpec::Sphere { .. } => {
            let n = fro_norm(x);
            if (n - 1.0).abs() <= MEMBERSHIP_TOL {
                Ok(())
            } else {
                Err(GeometryError::OffManifold(format!("|x| = {n}")))
            }
        }
        ManifoldSpec::Stiefel { cols, .. } => {
            let g = x.t().dot(x);
            let mut worst = 0.0f64;
            for i in 0..cols {
                for j in 0..cols {
                    let want = if i == j { 1.0 } else { 0.0 };
                    worst = worst.max((g[[i, j]] - want).abs());
                }
            }
            if worst <= MEMBERSHIP_TOL {
                Ok(())
            } else {
                Err(GeometryError::OffManifold(format!(
                    "|X^T X - I|_max = {worst:.3e}"
                )))
            }
        }
        ManifoldSpec::FixedRank { rank, .. } => {
            let s = svd_thin(x)?;
            check_rank_profile(&s.sigma, rank)
        }
    }
}

fn check_rank_profile(sigma: &Array1<f64>, rank: usize) -> Result<(), GeometryError> {
    let s1 = sigma[0];
    let sr = sigma[rank - 1];
    if sr <= RANK_TOL * s1 || s1 == 0.0 {
        return Err(GeometryError::RankCollapse {
            sigma_r: sr,
            floor: RANK_TOL * s1,
        });
    }
    if sigma.len() > rank {
        let tail = sigma[rank];
        if tail > MEMBERSHIP_TOL * s1 {
            return Err(GeometryError::OffManifold(format!(
                "sigma_{} = {tail:.3e} exceeds rank {rank}",
                rank + 1
            )));
        }
    }
    Ok(())
}

/// Violation of the side constraint (0 when satisfied within tolerance).
pub fn constraint_violation(cspec: ConstraintSpec, x: &Matrix) -> f64 {
    match cspec {
        ConstraintSpec::WholeManifold => 0.0,
        ConstraintSpec::NonnegativeOrthant | ConstraintSpec::NonnegativeFixedRank => x
            .iter()
            .fold(0.0f64, |worst, &v| worst.max(-v)),
    }
}

/// Constraint membership with the per-kind tolerances documented at the top
/// of this module.
pub fn check_constraint(cspec: ConstraintSpec, x: &Matrix) -> Result<(), GeometryError> {
    let viol = constraint_violation(cspec, x);
    let tol = match cspec {
        ConstraintSpec::WholeManifold => return Ok(()),
        ConstraintSpec::NonnegativeOrthant | ConstraintSpec::NonnegativeFixedRank => ORTHANT_TOL,
    };
    if viol <= tol {
        Ok(())
    } else {
        Err(GeometryError::OffManifold(format!(
            "constraint violation {viol:.3e} exceeds {tol:.3e}"
        )))
    }
}

/// Full membership check for a block point against its specs.
pub fn check_point(
    specs: &[ManifoldSpec],
    constraints: &[ConstraintSpec],
    point: &BlockPoint,
) -> Result<(), GeometryError> {
    if specs.len() != point.blocks.len() || constraints.len() != point.blocks.len() {
        return Err(GeometryError::ShapeMismatch(
            "block count mismatch".into(),
        ));
    }
    for ((spec, cspec), x) in specs.iter().zip(constraints).zip(&point.blocks) {
        check_membership(spec, x)?;
        check_constraint(*cspec, x)?;
    }
    Ok(())
}

/// Thin factorization of a fixed-rank point, one dense SVD. Returns None for
/// non-fixed-rank specs.
pub fn factorize(spec: &ManifoldSpec, x: &Matrix) -> Result<Option<FixedRankFactors>, GeometryError> {
    match *spec {
        ManifoldSpec::FixedRank { rank, .. } => {
            ops_counter::record_dense();
            let s = svd_truncated(x, rank)?;
            Ok(Some(FixedRankFactors {
                u: s.u,
                sigma: s.sigma,
                v: s.v,
            }))
        }
        _ => Ok(None),
    }
}

/// Orthogonal projection of an ambient direction onto the tangent space at x.
/// The base point must pass membership (domain error otherwise). Fixed-rank
/// output is in factored form.
pub fn tangent_project(
    spec: &ManifoldSpec,
    x: &Matrix,
    u: &Matrix,
) -> Result<TangentVector, GeometryError> {
    check_membership(spec, x)?;
    match *spec {
        ManifoldSpec::FixedRank { rank, .. } => {
            ops_counter::record_dense();
            let s = svd_truncated(x, rank)?;
            let f = FixedRankFactors {
                u: s.u,
                sigma: s.sigma,
                v: s.v,
            };
            Ok(TangentVector::Factored(tangent_project_factored(&f, u)))
        }
        _ => tangent_project_unchecked(spec, x, u),
    }
}

/// Same projection without re-validating membership; the caller (solver hot
/// path) guarantees the base point.
pub fn tangent_project_unchecked(
    spec: &ManifoldSpec,
    x: &Matrix,
    u: &Matrix,
) -> Result<TangentVector, GeometryError> {
    check_shape(spec, u)?;
    match *spec {
        ManifoldSpec::Euclidean { .. } => Ok(TangentVector::Ambient(u.clone())),
        ManifoldSpec::Sphere { .. } => {
            // u - x <x, u>
            let inner: f64 = x.iter().zip(u.iter()).map(|(a, b)| a * b).sum();
            Ok(TangentVector::Ambient(u - &x.mapv(|v| v * inner)))
        }
        ManifoldSpec::Stiefel { .. } => {
            // u - x sym(x^T u)
            let xtu = x.t().dot(u);
            let sym = (&xtu + &xtu.t()).mapv(|v| 0.5 * v);
            Ok(TangentVector::Ambient(u - &x.dot(&sym)))
        }
        ManifoldSpec::FixedRank { rank, .. } => {
            let s = svd_truncated(x, rank)?;
            ops_counter::record_dense();
            let f = FixedRankFactors {
                u: s.u,
                sigma: s.sigma,
                v: s.v,
            };
            Ok(TangentVector::Factored(tangent_project_factored(&f, u)))
        }
    }
}

/// Factored tangent projection at a fixed-rank point given its cached
/// factors: M = U^T e V, U_p = (I - U U^T) e V, V_p = (I - V V^T) e^T U.
pub fn tangent_project_factored(f: &FixedRankFactors, e: &Matrix) -> FactoredTangent {
    let ev = e.dot(&f.v);
    let etu = e.t().dot(&f.u);
    let m = f.u.t().dot(&ev);
    let u_p = &ev - &f.u.dot(&m);
    let v_p = &etu - &f.v.dot(&m.t());
    FactoredTangent {
        u: f.u.clone(),
        v: f.v.clone(),
        m,
        u_p,
        v_p,
    }
}

/// Riemannian gradient: the tangent projection of the Euclidean gradient
/// (embedded submanifolds inherit the metric).
pub fn riemannian_gradient(
    spec: &ManifoldSpec,
    x: &Matrix,
    egrad: &Matrix,
) -> Result<TangentVector, GeometryError> {
    tangent_project(spec, x, egrad)
}

/// Metric-projection retraction of x along alpha * v. For alpha = 0 the base
/// point is returned bitwise. Fixed-rank tangent vectors in factored form go
/// through the reduced SVD path; ambient ones assemble x + alpha v and
/// truncate (the dense diagnostic path). Both agree to well below 1e-9.
pub fn retract(
    spec: &ManifoldSpec,
    x: &Matrix,
    v: &TangentVector,
    alpha: f64,
) -> Result<Matrix, GeometryError> {
    if alpha == 0.0 {
        return Ok(x.clone());
    }
    match *spec {
        ManifoldSpec::Euclidean { .. } => Ok(x + &v.to_ambient().mapv(|t| t * alpha)),
        ManifoldSpec::Sphere { .. } => {
            let y = x + &v.to_ambient().mapv(|t| t * alpha);
            let n = fro_norm(&y);
            if n <= f64::MIN_POSITIVE {
                return Err(GeometryError::RetractionFailure(
                    "sphere step lands at the origin".into(),
                ));
            }
            Ok(y.mapv(|t| t / n))
        }
        ManifoldSpec::Stiefel { .. } => {
            let y = x + &v.to_ambient().mapv(|t| t * alpha);
            let s = svd_thin(&y)?;
            let k = s.sigma.len();
            if s.sigma[k - 1] <= RANK_TOL * s.sigma[0] || s.sigma[0] == 0.0 {
                return Err(GeometryError::RetractionFailure(format!(
                    "polar factor undefined, sigma_min = {:.3e}",
                    s.sigma[k - 1]
                )));
            }
            Ok(s.u.dot(&s.v.t()))
        }
        ManifoldSpec::FixedRank { rank, .. } => match v {
            TangentVector::Factored(f) => {
                let base = FixedRankFactors {
                    u: f.u.clone(),
                    v: f.v.clone(),
                    sigma: extract_sigma(x, f)?,
                };
                let (point, _) = retract_factored(&base, f, alpha)?;
                Ok(point)
            }
            TangentVector::Ambient(amb) => {
                ops_counter::record_dense();
                let y = x + &amb.mapv(|t| t * alpha);
                let s = svd_truncated(&y, rank)?;
                check_rank_profile_prefix(&s.sigma, rank)?;
                Ok(s.reconstruct())
            }
        },
    }
}

/// The factored tangent does not carry sigma; recover it from the base point
/// as U^T x V, which is diagonal for an exact factorization.
fn extract_sigma(x: &Matrix, f: &FactoredTangent) -> Result<Array1<f64>, GeometryError> {
    let core = f.u.t().dot(&x.dot(&f.v));
    let r = core.nrows();
    let mut sigma = Array1::zeros(r);
    for i in 0..r {
        sigma[i] = core[[i, i]];
    }
    Ok(sigma)
}

fn check_rank_profile_prefix(sigma: &Array1<f64>, rank: usize) -> Result<(), GeometryError> {
    let s1 = sigma[0];
    let sr = sigma[rank - 1];
    if sr <= RANK_TOL * s1 || s1 == 0.0 {
        return Err(GeometryError::RankCollapse {
            sigma_r: sr,
            floor: RANK_TOL * s1,
        });
    }
    Ok(())
}

/// Reduced-path retraction at a factored fixed-rank point. Assembles
/// x + alpha eta = [U Q_u] K [V Q_v]^T with a (2r) x (2r) core K, truncates
/// K's SVD to rank r, and returns both the dense point and its new factors so
/// solvers never refactorize. Rank collapse of the core is an error.
pub fn retract_factored(
    base: &FixedRankFactors,
    eta: &FactoredTangent,
    alpha: f64,
) -> Result<(Matrix, FixedRankFactors), GeometryError> {
    let r = base.sigma.len();
    if alpha == 0.0 {
        return Ok((base.reconstruct(), base.clone()));
    }
    let (q_u, r_u) = orthonormalize_against(&base.u, &eta.u_p);
    let (q_v, r_v) = orthonormalize_against(&base.v, &eta.v_p);

    let mut k = Matrix::zeros((2 * r, 2 * r));
    for i in 0..r {
        k[[i, i]] = base.sigma[i];
        for j in 0..r {
            k[[i, j]] += alpha * eta.m[[i, j]];
            k[[i, r + j]] = alpha * r_v[[j, i]];
            k[[r + i, j]] = alpha * r_u[[i, j]];
        }
    }
    ops_counter::record_reduced();
    let s = svd_thin(&k)?;
    check_rank_profile_prefix(
        &s.sigma.slice(ndarray::s![..r]).to_owned(),
        r,
    )?;

    let m = base.u.nrows();
    let n = base.v.nrows();
    let mut left = Matrix::zeros((m, 2 * r));
    left.slice_mut(ndarray::s![.., ..r]).assign(&base.u);
    left.slice_mut(ndarray::s![.., r..]).assign(&q_u);
    let mut right = Matrix::zeros((n, 2 * r));
    right.slice_mut(ndarray::s![.., ..r]).assign(&base.v);
    right.slice_mut(ndarray::s![.., r..]).assign(&q_v);

    let u_new = left.dot(&s.u.slice(ndarray::s![.., ..r]).to_owned());
    let v_new = right.dot(&s.v.slice(ndarray::s![.., ..r]).to_owned());
    let sigma_new = s.sigma.slice(ndarray::s![..r]).to_owned();
    let factors = FixedRankFactors {
        u: u_new,
        sigma: sigma_new,
        v: v_new,
    };
    Ok((factors.reconstruct(), factors))
}

/// Projection onto the side constraint. The nonnegative fixed-rank case
/// alternates [clip, truncate] until the rank-r iterate clears the orthant
/// floor.
pub fn project_constraint(
    cspec: ConstraintSpec,
    spec: &ManifoldSpec,
    x: &Matrix,
) -> Result<Matrix, GeometryError> {
    match cspec {
        ConstraintSpec::WholeManifold => Ok(x.clone()),
        ConstraintSpec::NonnegativeOrthant => Ok(x.mapv(|v| v.max(0.0))),
        ConstraintSpec::NonnegativeFixedRank => {
            let (point, _) = project_nonneg_fixed_rank(spec, x)?;
            Ok(point)
        }
    }
}

/// Metric projection of an arbitrary ambient matrix onto the manifold, the
/// workhorse of the projected-gradient baseline. Fixed-rank truncations are
/// counted as dense SVDs; factors are returned where the projection computes
/// them anyway.
pub fn project_manifold(
    spec: &ManifoldSpec,
    x: &Matrix,
) -> Result<(Matrix, Option<FixedRankFactors>), GeometryError> {
    match *spec {
        ManifoldSpec::Euclidean { .. } => Ok((x.clone(), None)),
        ManifoldSpec::Sphere { .. } => {
            let n = fro_norm(x);
            if n <= f64::MIN_POSITIVE {
                return Err(GeometryError::RetractionFailure(
                    "cannot project the origin onto the sphere".into(),
                ));
            }
            Ok((x.mapv(|t| t / n), None))
        }
        ManifoldSpec::Stiefel { .. } => {
            let s = svd_thin(x)?;
            let k = s.sigma.len();
            if s.sigma[k - 1] <= RANK_TOL * s.sigma[0] || s.sigma[0] == 0.0 {
                return Err(GeometryError::RetractionFailure(format!(
                    "polar factor undefined, sigma_min = {:.3e}",
                    s.sigma[k - 1]
                )));
            }
            Ok((s.u.dot(&s.v.t()), None))
        }
        ManifoldSpec::FixedRank { rank, .. } => {
            ops_counter::record_dense();
            let s = svd_truncated(x, rank)?;
            check_rank_profile_prefix(&s.sigma, rank)?;
            let f = FixedRankFactors {
                u: s.u,
                sigma: s.sigma,
                v: s.v,
            };
            Ok((f.reconstruct(), Some(f)))
        }
    }
}

/// Alternating projection for the fixed-rank / nonnegative intersection,
/// returning the point and its factors (the last step is a truncation, so the
/// factors come for free). Runs at least [`NONNEG_ALTERNATION_ROUNDS`] rounds
/// and continues until the truncated iterate is elementwise above
/// -[`ORTHANT_TOL`], capped at [`NONNEG_ALTERNATION_MAX_ROUNDS`]. Ending on
/// the truncation keeps the output exactly rank r; the adaptive tail is what
/// makes the orthant floor attainable from that side.
pub fn project_nonneg_fixed_rank(
    spec: &ManifoldSpec,
    x: &Matrix,
) -> Result<(Matrix, FixedRankFactors), GeometryError> {
    let rank = match *spec {
        ManifoldSpec::FixedRank { rank, .. } => rank,
        _ => {
            return Err(GeometryError::ShapeMismatch(
                "nonnegative fixed-rank projection needs a fixed-rank spec".into(),
            ))
        }
    };
    let mut y = x.clone();
    let mut factors = None;
    for round in 0..NONNEG_ALTERNATION_MAX_ROUNDS {
        y.mapv_inplace(|v| v.max(0.0));
        ops_counter::record_dense();
        let s = svd_truncated(&y, rank)?;
        check_rank_profile_prefix(&s.sigma, rank)?;
        y = s.reconstruct();
        factors = Some(FixedRankFactors {
            u: s.u,
            sigma: s.sigma,
            v: s.v,
        });
        if round + 1 >= NONNEG_ALTERNATION_ROUNDS
            && constraint_violation(ConstraintSpec::NonnegativeFixedRank, &y) <= 0.5 * ORTHANT_TOL
        {
            break;
        }
    }
    Ok((y, factors.expect("at least one round")))
}

/// Second-order behavior probe for a retraction: r(t) =
/// ||Rtr_x(t v) - (x + t v)|| / t^2 over a fixed grid of five step sizes.
/// A bounded ratio spread certifies the O(t^2) displacement bound; flat
/// retractions (Euclidean) report zero ratios and pass.
#[derive(Debug, Clone)]
pub struct OrderCheck {
    pub ts: [f64; 5],
    pub ratios: [f64; 5],
    pub passed: bool,
}

pub fn retraction_order_check(
    spec: &ManifoldSpec,
    x: &Matrix,
    v: &TangentVector,
) -> Result<OrderCheck, GeometryError> {
    let ts = [
        1e-1,
        10f64.powf(-1.5),
        1e-2,
        10f64.powf(-2.5),
        1e-3,
    ];
    let mut ratios = [0.0; 5];
    for (i, &t) in ts.iter().enumerate() {
        let moved = retract(spec, x, v, t)?;
        let straight = x + &v.to_ambient().mapv(|z| z * t);
        ratios[i] = fro_norm(&(&moved - &straight)) / (t * t);
    }
    let maxr = ratios.iter().fold(0.0f64, |m, &r| m.max(r));
    let minr = ratios.iter().fold(f64::INFINITY, |m, &r| m.min(r));
    // Flat retractions: all ratios at numerical zero.
    let passed = if maxr <= 1e-12 {
        true
    } else {
        maxr / minr.max(1e-300) <= 10.0
    };
    Ok(OrderCheck { ts, ratios, passed })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::gaussian_matrix;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn fixed_rank_point(rng: &mut ChaCha8Rng, m: usize, n: usize, r: usize) -> Matrix {
        let a = gaussian_matrix(rng, m, r);
        let b = gaussian_matrix(rng, n, r);
        a.dot(&b.t())
    }

    #[test]
    fn tangent_project_of_off_manifold_point_is_domain_error() {
        let spec = ManifoldSpec::Sphere { dim: 3 };
        let x = Matrix::from_shape_vec((3, 1), vec![1.0, 1.0, 0.0]).unwrap();
        let u = Matrix::from_shape_vec((3, 1), vec![0.1, 0.2, 0.3]).unwrap();
        assert!(matches!(
            tangent_project(&spec, &x, &u),
            Err(GeometryError::OffManifold(_))
        ));
    }

    #[test]
    fn retract_with_zero_step_returns_base_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let spec = ManifoldSpec::Stiefel { rows: 6, cols: 2 };
        let g = gaussian_matrix(&mut rng, 6, 2);
        let s = svd_thin(&g).unwrap();
        let x = s.u.dot(&s.v.t());
        let v = tangent_project(&spec, &x, &gaussian_matrix(&mut rng, 6, 2)).unwrap();
        let y = retract(&spec, &x, &v, 0.0).unwrap();
        assert_eq!(x, y);
    }

    #[test]
    fn sphere_retraction_normalizes() {
        let spec = ManifoldSpec::Sphere { dim: 4 };
        let mut x = Matrix::zeros((4, 1));
        x[[0, 0]] = 1.0;
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let v = tangent_project(&spec, &x, &gaussian_matrix(&mut rng, 4, 1)).unwrap();
        let y = retract(&spec, &x, &v, 0.7).unwrap();
        assert!((fro_norm(&y) - 1.0).abs() <= 1e-14);
    }

    #[test]
    fn stiefel_retraction_fails_on_rank_deficient_step() {
        let spec = ManifoldSpec::Stiefel { rows: 3, cols: 2 };
        let x = {
            let mut m = Matrix::zeros((3, 2));
            m[[0, 0]] = 1.0;
            m[[1, 1]] = 1.0;
            m
        };
        // x + v has a zero second column: polar factor undefined.
        let mut v = Matrix::zeros((3, 2));
        v[[1, 1]] = -1.0;
        let tv = TangentVector::Ambient(v);
        assert!(matches!(
            retract(&spec, &x, &tv, 1.0),
            Err(GeometryError::RetractionFailure(_)) | Err(GeometryError::RankCollapse { .. })
        ));
    }

    #[test]
    fn fixed_rank_factored_retraction_matches_dense_path() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let spec = ManifoldSpec::FixedRank {
            rows: 8,
            cols: 6,
            rank: 2,
        };
        for _ in 0..20 {
            let x = fixed_rank_point(&mut rng, 8, 6, 2);
            let e = gaussian_matrix(&mut rng, 8, 6);
            let f = factorize(&spec, &x).unwrap().unwrap();
            let eta = tangent_project_factored(&f, &e);
            let alpha = 0.37;
            let (fast, new_factors) = retract_factored(&f, &eta, alpha).unwrap();
            let dense = retract(
                &spec,
                &x,
                &TangentVector::Ambient(eta.to_ambient()),
                alpha,
            )
            .unwrap();
            let rel = fro_norm(&(&fast - &dense)) / fro_norm(&dense);
            assert!(rel <= 1e-9, "paths disagree: rel = {rel:.3e}");
            // Returned factors reconstruct the returned point.
            let recon = new_factors.reconstruct();
            assert!(fro_norm(&(&recon - &fast)) <= 1e-12 * fro_norm(&fast).max(1.0));
        }
    }

    #[test]
    fn fixed_rank_retraction_reports_rank_collapse() {
        let spec = ManifoldSpec::FixedRank {
            rows: 4,
            cols: 4,
            rank: 2,
        };
        let mut x = Matrix::zeros((4, 4));
        x[[0, 0]] = 1.0;
        x[[1, 1]] = 1.0;
        // Step that annihilates the second direction entirely.
        let mut d = Matrix::zeros((4, 4));
        d[[1, 1]] = -1.0;
        let f = factorize(&spec, &x).unwrap().unwrap();
        let eta = tangent_project_factored(&f, &d);
        assert!(matches!(
            retract_factored(&f, &eta, 1.0),
            Err(GeometryError::RankCollapse { .. })
        ));
    }

    #[test]
    fn nonneg_fixed_rank_projection_returns_rank_r_near_orthant() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let spec = ManifoldSpec::FixedRank {
            rows: 10,
            cols: 7,
            rank: 3,
        };
        // Start from a nonnegative rank-3 matrix plus a small signed bump.
        let a = crate::linalg::uniform_matrix(&mut rng, 10, 3);
        let b = crate::linalg::uniform_matrix(&mut rng, 7, 3);
        let clean = a.dot(&b.t());
        let noise = gaussian_matrix(&mut rng, 10, 7).mapv(|v| 0.05 * v);
        let (y, f) = project_nonneg_fixed_rank(&spec, &(&clean + &noise)).unwrap();
        assert_eq!(f.sigma.len(), 3);
        check_membership(&spec, &y).unwrap();
        check_constraint(ConstraintSpec::NonnegativeFixedRank, &y).unwrap();
    }

    #[test]
    fn sphere_order_check_ratios_match_curvature() {
        let spec = ManifoldSpec::Sphere { dim: 5 };
        let mut x = Matrix::zeros((5, 1));
        x[[0, 0]] = 1.0;
        let mut v = Matrix::zeros((5, 1));
        v[[1, 0]] = 1.0; // unit tangent
        let chk = retraction_order_check(&spec, &x, &TangentVector::Ambient(v)).unwrap();
        assert!(chk.passed);
        // Analytic displacement: sqrt(1 + t^2) - 1 ~ t^2 / 2 for a unit
        // tangent, so every ratio sits near one half.
        for (t, r) in chk.ts.iter().zip(chk.ratios.iter()) {
            let exact = ((1.0 + t * t).sqrt() - 1.0) / (t * t);
            assert!((r - exact).abs() <= 1e-10);
            assert!((r - 0.5).abs() <= 5e-3, "ratio {r} at t = {t}");
        }
    }

    #[test]
    fn euclidean_order_check_is_flat_and_passes() {
        let spec = ManifoldSpec::Euclidean { rows: 3, cols: 2 };
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = gaussian_matrix(&mut rng, 3, 2);
        let v = gaussian_matrix(&mut rng, 3, 2);
        let chk = retraction_order_check(&spec, &x, &TangentVector::Ambient(v)).unwrap();
        assert!(chk.passed);
        assert!(chk.ratios.iter().all(|&r| r <= 1e-12));
    }

    #[test]
    fn factored_tangent_norm_matches_ambient_norm() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let spec = ManifoldSpec::FixedRank {
            rows: 9,
            cols: 5,
            rank: 2,
        };
        for _ in 0..10 {
            let x = fixed_rank_point(&mut rng, 9, 5, 2);
            let f = factorize(&spec, &x).unwrap().unwrap();
            let eta = tangent_project_factored(&f, &gaussian_matrix(&mut rng, 9, 5));
            let amb = eta.to_ambient();
            assert!((eta.norm() - fro_norm(&amb)).abs() <= 1e-10 * eta.norm().max(1.0));
        }
    }

    #[test]
    fn membership_rejects_wrong_rank() {
        let spec = ManifoldSpec::FixedRank {
            rows: 5,
            cols: 5,
            rank: 2,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let full = gaussian_matrix(&mut rng, 5, 5);
        assert!(check_membership(&spec, &full).is_err());
        let ok = fixed_rank_point(&mut rng, 5, 5, 2);
        assert!(check_membership(&spec, &ok).is_ok());
    }
}

//! Benchmark problem families: low-rank matrix recovery from random linear
//! measurements, rank-constrained CP tensor decomposition with l1 penalties,
//! l1-regularized low-rank matrix factorization, an l1-penalized quadratic
//! trace problem on the Stiefel manifold, and a plain separable quadratic
//! used as a solver smoke fixture. Each instance carries its block geometry,
//! per-block nonsmooth terms, gradient oracles, and ground truth where one
//! exists.

use crate::linalg::{
    fro_dot, fro_norm, gaussian_matrix, spectral_norm_sq, svd_truncated,
    sym_largest_eigenvalue, uniform_matrix, Matrix,
};
use crate::manifolds::{
    project_nonneg_fixed_rank, BlockPoint, ConstraintSpec, ManifoldSpec,
};
use crate::surrogates::NonsmoothTerm;
use crate::tensor::{cp_tensor, khatri_rao, unfold};
use ndarray::Array1;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ProblemError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("no ground truth available for this problem")]
    MissingGroundTruth,
}

/// Linear measurement map X -> (<A_i, X>)_i with its observation vector.
pub struct SensingOperator {
    pub matrices: Vec<Matrix>,
    pub b: Array1<f64>,
}

impl SensingOperator {
    pub fn apply(&self, x: &Matrix) -> Array1<f64> {
        Array1::from_iter(self.matrices.iter().map(|a| fro_dot(a, x)))
    }

    pub fn adjoint(&self, y: &Array1<f64>) -> Matrix {
        let (m, n) = self.matrices[0].dim();
        let mut out = Matrix::zeros((m, n));
        for (a, &c) in self.matrices.iter().zip(y.iter()) {
            out.zip_mut_with(a, |o, &v| *o += c * v);
        }
        out
    }
}

enum Kind {
    MatrixRecovery {
        op: SensingOperator,
        x_star: Matrix,
        smoothness: f64,
    },
    Ncpd {
        // Mode unfoldings of the target tensor, plus its norm for errors.
        unfoldings: [Matrix; 3],
        target_norm: f64,
    },
    Nmf {
        x: Matrix,
        target_norm: f64,
    },
    SparsePca {
        gram: Matrix,
        smoothness: f64,
    },
    Quadratic {
        targets: Vec<Matrix>,
        // Multiplier applied to the reported gradient only. One is the
        // honest value; anything else desynchronizes the oracle from the
        // objective, which the checker suite uses as a failure fixture.
        grad_scale: f64,
    },
}

pub struct ProblemInstance {
    pub name: String,
    pub block_specs: Vec<(ManifoldSpec, ConstraintSpec)>,
    pub nonsmooth: Vec<NonsmoothTerm>,
    /// Undersampling ratio p/(mn) as a reduced fraction (matrix recovery).
    pub rho: Option<(u64, u64)>,
    /// Oversampling ratio r(m+n-r)/p as a reduced fraction (matrix recovery).
    pub mu: Option<(u64, u64)>,
    kind: Kind,
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

fn reduced(num: u64, den: u64) -> (u64, u64) {
    let g = gcd(num, den).max(1);
    (num / g, den / g)
}

impl ProblemInstance {
    pub fn block_count(&self) -> usize {
        self.block_specs.len()
    }

    /// Smooth part of the objective.
    pub fn smooth_value(&self, point: &BlockPoint) -> f64 {
        match &self.kind {
            Kind::MatrixRecovery { op, .. } => {
                let resid = &op.apply(&point.blocks[0]) - &op.b;
                0.5 * resid.iter().map(|v| v * v).sum::<f64>()
            }
            Kind::Ncpd { unfoldings, .. } => {
                let kr = khatri_rao(&point.blocks[2], &point.blocks[1]);
                let model = point.blocks[0].dot(&kr.t());
                fro_norm(&(&unfoldings[0] - &model)).powi(2)
            }
            Kind::Nmf { x, .. } => {
                let model = point.blocks[0].dot(&point.blocks[1]);
                fro_norm(&(x - &model)).powi(2)
            }
            Kind::SparsePca { gram, .. } => {
                let qx = gram.dot(&point.blocks[0]);
                -fro_dot(&point.blocks[0], &qx)
            }
            Kind::Quadratic { targets, .. } => targets
                .iter()
                .zip(&point.blocks)
                .map(|(a, t)| 0.5 * fro_norm(&(t - a)).powi(2))
                .sum(),
        }
    }

    /// Full objective: smooth part plus every block's nonsmooth term.
    pub fn objective(&self, point: &BlockPoint) -> f64 {
        let mut v = self.smooth_value(point);
        for (psi, block) in self.nonsmooth.iter().zip(&point.blocks) {
            v += psi.evaluate(block);
        }
        v
    }

    /// Euclidean gradient of the smooth part with respect to block i, with
    /// the other blocks frozen at their values in `point`.
    pub fn block_euclid_grad(&self, point: &BlockPoint, i: usize) -> Matrix {
        match &self.kind {
            Kind::MatrixRecovery { op, .. } => {
                let resid = &op.apply(&point.blocks[0]) - &op.b;
                op.adjoint(&resid)
            }
            Kind::Ncpd { unfoldings, .. } => {
                let u = &point.blocks;
                let (kr, gram) = match i {
                    0 => (khatri_rao(&u[2], &u[1]), hadamard_gram(&u[1], &u[2])),
                    1 => (khatri_rao(&u[2], &u[0]), hadamard_gram(&u[0], &u[2])),
                    2 => (khatri_rao(&u[1], &u[0]), hadamard_gram(&u[0], &u[1])),
                    _ => panic!("block index {i} out of range"),
                };
                let fit = u[i].dot(&gram) - unfoldings[i].dot(&kr);
                fit.mapv(|v| 2.0 * v)
            }
            Kind::Nmf { x, .. } => {
                let resid = point.blocks[0].dot(&point.blocks[1]) - x;
                match i {
                    0 => resid.dot(&point.blocks[1].t()).mapv(|v| 2.0 * v),
                    1 => point.blocks[0].t().dot(&resid).mapv(|v| 2.0 * v),
                    _ => panic!("block index {i} out of range"),
                }
            }
            Kind::SparsePca { gram, .. } => gram.dot(&point.blocks[0]).mapv(|v| -2.0 * v),
            Kind::Quadratic {
                targets,
                grad_scale,
            } => (&point.blocks[i] - &targets[i]).mapv(|v| grad_scale * v),
        }
    }

    /// Lipschitz constant of the block-i marginal gradient at the current
    /// sweep point, where cheaply available.
    pub fn lipschitz(&self, point: &BlockPoint, i: usize) -> Option<f64> {
        match &self.kind {
            Kind::MatrixRecovery { smoothness, .. } => Some(*smoothness),
            Kind::Ncpd { .. } => {
                let u = &point.blocks;
                let gram = match i {
                    0 => hadamard_gram(&u[1], &u[2]),
                    1 => hadamard_gram(&u[0], &u[2]),
                    2 => hadamard_gram(&u[0], &u[1]),
                    _ => return None,
                };
                Some(2.0 * sym_largest_eigenvalue(&gram, 100))
            }
            Kind::Nmf { .. } => {
                let gram = match i {
                    0 => {
                        let h = &point.blocks[1];
                        h.dot(&h.t())
                    }
                    1 => {
                        let w = &point.blocks[0];
                        w.t().dot(w)
                    }
                    _ => return None,
                };
                Some(2.0 * sym_largest_eigenvalue(&gram, 100))
            }
            Kind::SparsePca { smoothness, .. } => Some(*smoothness),
            Kind::Quadratic { grad_scale, .. } => Some(grad_scale.abs().max(1.0)),
        }
    }

    /// Relative reconstruction error against the ground truth.
    pub fn relative_error(&self, point: &BlockPoint) -> Result<f64, ProblemError> {
        match &self.kind {
            Kind::MatrixRecovery { x_star, .. } => {
                Ok(fro_norm(&(&point.blocks[0] - x_star)) / fro_norm(x_star))
            }
            Kind::Ncpd {
                unfoldings,
                target_norm,
            } => {
                let kr = khatri_rao(&point.blocks[2], &point.blocks[1]);
                let model = point.blocks[0].dot(&kr.t());
                Ok(fro_norm(&(&unfoldings[0] - &model)) / target_norm)
            }
            Kind::Nmf { x, target_norm } => {
                let model = point.blocks[0].dot(&point.blocks[1]);
                Ok(fro_norm(&(x - &model)) / target_norm)
            }
            Kind::SparsePca { .. } => Err(ProblemError::MissingGroundTruth),
            Kind::Quadratic { targets, .. } => {
                let mut num = 0.0;
                let mut den = 0.0;
                for (a, t) in targets.iter().zip(&point.blocks) {
                    num += fro_norm(&(t - a)).powi(2);
                    den += fro_norm(a).powi(2);
                }
                Ok(num.sqrt() / den.sqrt().max(f64::MIN_POSITIVE))
            }
        }
    }

    /// Seeded random feasible initial point, Gaussian for unconstrained
    /// blocks and uniform [0,1] for nonnegative ones, projected to each
    /// block's manifold and constraint.
    pub fn init_point(&self, rng: &mut ChaCha8Rng) -> BlockPoint {
        let mut blocks = Vec::with_capacity(self.block_specs.len());
        for (spec, cons) in &self.block_specs {
            let (rows, cols) = spec.ambient_shape();
            let nonneg = !matches!(cons, ConstraintSpec::WholeManifold);
            let raw = if nonneg {
                uniform_matrix(rng, rows, cols)
            } else {
                gaussian_matrix(rng, rows, cols)
            };
            let block = match (spec, cons) {
                (ManifoldSpec::FixedRank { rank, .. }, ConstraintSpec::NonnegativeFixedRank) => {
                    let _ = rank;
                    project_nonneg_fixed_rank(spec, &raw)
                        .expect("random nonnegative init is full rank")
                        .0
                }
                (ManifoldSpec::FixedRank { rank, .. }, _) => svd_truncated(&raw, *rank)
                    .expect("random init is full rank")
                    .reconstruct(),
                (ManifoldSpec::Stiefel { .. }, _) => {
                    let s = crate::linalg::svd_thin(&raw).expect("random init is full rank");
                    s.u.dot(&s.v.t())
                }
                (ManifoldSpec::Sphere { .. }, _) => {
                    let n = fro_norm(&raw);
                    raw.mapv(|v| v / n)
                }
                (ManifoldSpec::Euclidean { .. }, _) => raw,
            };
            blocks.push(block);
        }
        BlockPoint::new(blocks)
    }

    pub fn sensing(&self) -> Option<&SensingOperator> {
        match &self.kind {
            Kind::MatrixRecovery { op, .. } => Some(op),
            _ => None,
        }
    }
}

fn hadamard_gram(a: &Matrix, b: &Matrix) -> Matrix {
    let mut g = a.t().dot(a);
    let gb = b.t().dot(b);
    g.zip_mut_with(&gb, |x, y| *x *= y);
    g
}

/// Recovery of a rank-r matrix from p random linear measurements:
/// f(X) = 0.5 |A(X) - b|^2 over the rank-r manifold, with Gaussian sensing
/// matrices and a Gaussian rank-r ground truth generating consistent
/// observations.
pub fn make_matrix_recovery(
    m: usize,
    n: usize,
    r: usize,
    p: usize,
    seed: u64,
) -> Result<ProblemInstance, ProblemError> {
    if r < 1 || r > m.min(n) || p < 1 || m < 1 || n < 1 {
        return Err(ProblemError::InvalidArgument(format!(
            "matrix recovery dims m={m} n={n} r={r} p={p}"
        )));
    }
    use rand::SeedableRng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let matrices: Vec<Matrix> = (0..p).map(|_| gaussian_matrix(&mut rng, m, n)).collect();
    let g1 = gaussian_matrix(&mut rng, m, r);
    let g2 = gaussian_matrix(&mut rng, n, r);
    let x_star = g1.dot(&g2.t());
    let b = Array1::from_iter(matrices.iter().map(|a| fro_dot(a, &x_star)));
    let op = SensingOperator { matrices, b };
    let smoothness = {
        let apply = |x: &Matrix| op.apply(x);
        let adjoint = |y: &Array1<f64>| op.adjoint(y);
        spectral_norm_sq(&apply, &adjoint, (m, n), 200, seed ^ 0x9e3779b97f4a7c15)
    };
    Ok(ProblemInstance {
        name: format!("matrec_p{p}"),
        block_specs: vec![(
            ManifoldSpec::FixedRank { rows: m, cols: n, rank: r },
            ConstraintSpec::WholeManifold,
        )],
        nonsmooth: vec![NonsmoothTerm::None],
        rho: Some(reduced(p as u64, (m * n) as u64)),
        mu: Some(reduced((r * (m + n - r)) as u64, p as u64)),
        kind: Kind::MatrixRecovery { op, x_star, smoothness },
    })
}

/// Rank-constrained CP decomposition of a synthetic order-3 tensor with l1
/// penalties: the first loading lives on a fixed-rank manifold, the other
/// two are Euclidean; nonnegativity adds orthant constraints per block. The
/// target is assembled from dense random loadings, so the rank-constrained
/// model cannot interpolate it exactly and the error curves plateau.
pub fn make_ncpd(
    dims: (usize, usize, usize),
    r_cp: usize,
    rank_block1: usize,
    lambdas: [f64; 3],
    nonneg: bool,
    seed: u64,
) -> Result<ProblemInstance, ProblemError> {
    let (i1, i2, i3) = dims;
    if r_cp < 1 || rank_block1 < 1 || rank_block1 > i1.min(r_cp) {
        return Err(ProblemError::InvalidArgument(format!(
            "ncpd dims {dims:?} R={r_cp} r={rank_block1}"
        )));
    }
    use rand::SeedableRng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sample = |rng: &mut ChaCha8Rng, rows: usize| {
        if nonneg {
            uniform_matrix(rng, rows, r_cp)
        } else {
            gaussian_matrix(rng, rows, r_cp)
        }
    };
    let g1 = sample(&mut rng, i1);
    let g2 = sample(&mut rng, i2);
    let g3 = sample(&mut rng, i3);
    let x = cp_tensor(&g1, &g2, &g3);
    let unfoldings = [unfold(&x, 0), unfold(&x, 1), unfold(&x, 2)];
    let target_norm = fro_norm(&unfoldings[0]);
    let block1_cons = if nonneg {
        ConstraintSpec::NonnegativeFixedRank
    } else {
        ConstraintSpec::WholeManifold
    };
    let eucl_cons = if nonneg {
        ConstraintSpec::NonnegativeOrthant
    } else {
        ConstraintSpec::WholeManifold
    };
    Ok(ProblemInstance {
        name: if nonneg { "ncpd_nonneg".into() } else { "ncpd".into() },
        block_specs: vec![
            (
                ManifoldSpec::FixedRank { rows: i1, cols: r_cp, rank: rank_block1 },
                block1_cons,
            ),
            (ManifoldSpec::Euclidean { rows: i2, cols: r_cp }, eucl_cons),
            (ManifoldSpec::Euclidean { rows: i3, cols: r_cp }, eucl_cons),
        ],
        nonsmooth: lambdas
            .iter()
            .map(|&w| {
                if w > 0.0 {
                    NonsmoothTerm::L1 { weight: w }
                } else {
                    NonsmoothTerm::None
                }
            })
            .collect(),
        rho: None,
        mu: None,
        kind: Kind::Ncpd { unfoldings, target_norm },
    })
}

/// l1-regularized low-rank factorization f(W, H) = |X - WH|^2 + lambda |H|_1
/// with W on the rank-r manifold intersected with the nonnegative orthant and
/// H Euclidean (optionally nonnegative). The target is a product of dense
/// uniform factors.
pub fn make_nmf(
    p: usize,
    n: usize,
    r_inner: usize,
    r: usize,
    lambda: f64,
    nonneg_h: bool,
    seed: u64,
) -> Result<ProblemInstance, ProblemError> {
    if r < 1 || r > p.min(r_inner) || lambda < 0.0 {
        return Err(ProblemError::InvalidArgument(format!(
            "nmf p={p} n={n} inner={r_inner} r={r} lambda={lambda}"
        )));
    }
    use rand::SeedableRng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w_star = uniform_matrix(&mut rng, p, r_inner);
    let h_star = uniform_matrix(&mut rng, r_inner, n);
    let x = w_star.dot(&h_star);
    let target_norm = fro_norm(&x);
    let h_cons = if nonneg_h {
        ConstraintSpec::NonnegativeOrthant
    } else {
        ConstraintSpec::WholeManifold
    };
    Ok(ProblemInstance {
        name: if nonneg_h { "nmf_nonneg".into() } else { "nmf".into() },
        block_specs: vec![
            (
                ManifoldSpec::FixedRank { rows: p, cols: r_inner, rank: r },
                ConstraintSpec::NonnegativeFixedRank,
            ),
            (ManifoldSpec::Euclidean { rows: r_inner, cols: n }, h_cons),
        ],
        nonsmooth: vec![NonsmoothTerm::None, NonsmoothTerm::L1 { weight: lambda }],
        rho: None,
        mu: None,
        kind: Kind::Nmf { x, target_norm },
    })
}

/// Sparse principal directions: minimize -<X, AA^T X> + w |X|_1 over the
/// Stiefel manifold of d x k frames, with a seeded Gaussian A.
pub fn make_sparse_pca(
    d: usize,
    k: usize,
    weight: f64,
    seed: u64,
) -> Result<ProblemInstance, ProblemError> {
    if k < 1 || k > d || weight < 0.0 {
        return Err(ProblemError::InvalidArgument(format!(
            "sparse pca d={d} k={k} weight={weight}"
        )));
    }
    use rand::SeedableRng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = gaussian_matrix(&mut rng, d, d);
    let gram = a.dot(&a.t());
    let smoothness = 2.0 * sym_largest_eigenvalue(&gram, 200);
    Ok(ProblemInstance {
        name: "sparse_pca".into(),
        block_specs: vec![(
            ManifoldSpec::Stiefel { rows: d, cols: k },
            ConstraintSpec::WholeManifold,
        )],
        nonsmooth: vec![NonsmoothTerm::L1 { weight }],
        rho: None,
        mu: None,
        kind: Kind::SparsePca { gram, smoothness },
    })
}

/// Separable quadratic fixture 0.5 sum |theta_i - a_i|^2 over Euclidean
/// blocks with explicit targets. grad_scale = 1 is the honest oracle; other
/// values report a scaled gradient while leaving the objective untouched,
/// for checker failure paths.
pub fn make_quadratic_with_targets(
    targets: Vec<Matrix>,
    grad_scale: f64,
) -> Result<ProblemInstance, ProblemError> {
    if targets.is_empty() {
        return Err(ProblemError::InvalidArgument("no blocks".into()));
    }
    Ok(ProblemInstance {
        name: "quadratic".into(),
        block_specs: targets
            .iter()
            .map(|a| {
                (
                    ManifoldSpec::Euclidean { rows: a.nrows(), cols: a.ncols() },
                    ConstraintSpec::WholeManifold,
                )
            })
            .collect(),
        nonsmooth: vec![NonsmoothTerm::None; targets.len()],
        rho: None,
        mu: None,
        kind: Kind::Quadratic { targets, grad_scale },
    })
}

/// Same fixture with Gaussian targets drawn from the seed.
pub fn make_quadratic(
    shapes: &[(usize, usize)],
    grad_scale: f64,
    seed: u64,
) -> Result<ProblemInstance, ProblemError> {
    use rand::SeedableRng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let targets: Vec<Matrix> = shapes
        .iter()
        .map(|&(r, c)| gaussian_matrix(&mut rng, r, c))
        .collect();
    make_quadratic_with_targets(targets, grad_scale)
}

/// Matrix recovery whose sensing operator reads out every entry once, so the
/// measurement map is an isometry. Test fixture for step-size logic.
#[cfg(test)]
pub(crate) fn identity_sensing_recovery(m: usize, n: usize, r: usize, seed: u64) -> ProblemInstance {
    use rand::SeedableRng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut matrices = Vec::with_capacity(m * n);
    for i in 0..m {
        for j in 0..n {
            let mut e = Matrix::zeros((m, n));
            e[[i, j]] = 1.0;
            matrices.push(e);
        }
    }
    let g1 = gaussian_matrix(&mut rng, m, r);
    let g2 = gaussian_matrix(&mut rng, n, r);
    let x_star = g1.dot(&g2.t());
    let b = Array1::from_iter(matrices.iter().map(|a| fro_dot(a, &x_star)));
    let op = SensingOperator { matrices, b };
    ProblemInstance {
        name: "matrec_identity".into(),
        block_specs: vec![(
            ManifoldSpec::FixedRank { rows: m, cols: n, rank: r },
            ConstraintSpec::WholeManifold,
        )],
        nonsmooth: vec![NonsmoothTerm::None],
        rho: Some(reduced((m * n) as u64, (m * n) as u64)),
        mu: Some(reduced((r * (m + n - r)) as u64, (m * n) as u64)),
        kind: Kind::MatrixRecovery { op, x_star, smoothness: 1.0 },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn matrix_recovery_truth_has_zero_residual_and_gradient() {
        let prob = make_matrix_recovery(10, 6, 2, 40, 7).unwrap();
        let x_star = match &prob.kind {
            Kind::MatrixRecovery { x_star, .. } => x_star.clone(),
            _ => unreachable!(),
        };
        let point = BlockPoint::new(vec![x_star]);
        assert!(prob.smooth_value(&point) <= 1e-18);
        let g = prob.block_euclid_grad(&point, 0);
        assert!(fro_norm(&g) <= 1e-9);
        assert!((prob.relative_error(&point).unwrap()).abs() <= 1e-14);
    }

    #[test]
    fn sampling_ratios_are_exact_rationals() {
        let p300 = make_matrix_recovery(50, 12, 3, 300, 1).unwrap();
        assert_eq!(p300.rho, Some((1, 2)));
        assert_eq!(p300.mu, Some((59, 100)));
        let p450 = make_matrix_recovery(50, 12, 3, 450, 1).unwrap();
        assert_eq!(p450.rho, Some((3, 4)));
        assert_eq!(p450.mu, Some((59, 150)));
    }

    #[test]
    fn sensing_adjoint_identity() {
        let prob = make_matrix_recovery(8, 5, 2, 30, 3).unwrap();
        let op = prob.sensing().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..50 {
            let x = gaussian_matrix(&mut rng, 8, 5);
            let y = Array1::from_iter((0..30).map(|_| {
                use rand::Rng;
                rng.gen::<f64>() - 0.5
            }));
            let lhs: f64 = op.apply(&x).iter().zip(y.iter()).map(|(a, b)| a * b).sum();
            let rhs = fro_dot(&x, &op.adjoint(&y));
            assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + lhs.abs()));
        }
    }

    #[test]
    fn ncpd_gradients_vanish_at_exact_loadings_without_penalty() {
        let prob = make_ncpd((6, 5, 4), 3, 2, [0.0; 3], false, 11).unwrap();
        // Rebuild the generating loadings with the same stream.
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let g1 = gaussian_matrix(&mut rng, 6, 3);
        let g2 = gaussian_matrix(&mut rng, 5, 3);
        let g3 = gaussian_matrix(&mut rng, 4, 3);
        let point = BlockPoint::new(vec![g1, g2, g3]);
        assert!(prob.smooth_value(&point) <= 1e-18);
        for i in 0..3 {
            assert!(fro_norm(&prob.block_euclid_grad(&point, i)) <= 1e-9);
        }
    }

    #[test]
    fn ncpd_all_ones_rank_one_objective_is_penalty_only() {
        let prob = make_ncpd((3, 3, 3), 1, 1, [0.5, 0.5, 0.5], false, 13).unwrap();
        // Overwrite the target interpretation: at the all-ones point the
        // model tensor is all ones; compare against the instance target.
        let ones = BlockPoint::new(vec![
            Matrix::ones((3, 1)),
            Matrix::ones((3, 1)),
            Matrix::ones((3, 1)),
        ]);
        let fit = prob.smooth_value(&ones);
        let total = prob.objective(&ones);
        // Penalty = 0.5 * 9 entries of ones = 1.5 per block.
        assert!((total - fit - 4.5).abs() <= 1e-12);
    }

    #[test]
    fn ncpd_objective_matches_direct_tensor_residual() {
        let prob = make_ncpd((6, 5, 4), 3, 2, [0.0; 3], true, 17).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let point = prob.init_point(&mut rng);
        let matricized = prob.smooth_value(&point);
        // Direct: assemble both tensors and take the residual entrywise.
        let mut rng2 = ChaCha8Rng::seed_from_u64(17);
        let g1 = uniform_matrix(&mut rng2, 6, 3);
        let g2 = uniform_matrix(&mut rng2, 5, 3);
        let g3 = uniform_matrix(&mut rng2, 4, 3);
        let target = cp_tensor(&g1, &g2, &g3);
        let model = cp_tensor(&point.blocks[0], &point.blocks[1], &point.blocks[2]);
        let direct: f64 = target
            .iter()
            .zip(model.iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        assert!((matricized - direct).abs() <= 1e-10 * (1.0 + direct));
    }

    #[test]
    fn nmf_gradients_vanish_at_factorization_point() {
        let prob = make_nmf(8, 6, 4, 2, 0.0, true, 23).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let w_star = uniform_matrix(&mut rng, 8, 4);
        let h_star = uniform_matrix(&mut rng, 4, 6);
        let point = BlockPoint::new(vec![w_star, h_star]);
        assert!(prob.smooth_value(&point) <= 1e-18);
        assert!(fro_norm(&prob.block_euclid_grad(&point, 0)) <= 1e-10);
        assert!(fro_norm(&prob.block_euclid_grad(&point, 1)) <= 1e-10);

        // W = 0 kills the H gradient.
        let zero_w = BlockPoint::new(vec![
            Matrix::zeros((8, 4)),
            uniform_matrix(&mut rng, 4, 6),
        ]);
        assert_eq!(fro_norm(&prob.block_euclid_grad(&zero_w, 1)), 0.0);
    }

    #[test]
    fn relative_error_reference_points() {
        let prob = make_matrix_recovery(6, 4, 2, 20, 31).unwrap();
        let x_star = match &prob.kind {
            Kind::MatrixRecovery { x_star, .. } => x_star.clone(),
            _ => unreachable!(),
        };
        let zero = BlockPoint::new(vec![Matrix::zeros((6, 4))]);
        assert!((prob.relative_error(&zero).unwrap() - 1.0).abs() <= 1e-14);
        let doubled = BlockPoint::new(vec![x_star.mapv(|v| 2.0 * v)]);
        assert!((prob.relative_error(&doubled).unwrap() - 1.0).abs() <= 1e-14);
    }

    #[test]
    fn sparse_pca_has_no_ground_truth() {
        let prob = make_sparse_pca(8, 3, 0.1, 5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let point = prob.init_point(&mut rng);
        assert!(matches!(
            prob.relative_error(&point),
            Err(ProblemError::MissingGroundTruth)
        ));
    }

    #[test]
    fn init_points_are_feasible_for_every_family() {
        use crate::manifolds::check_point;
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let probs = vec![
            make_matrix_recovery(10, 6, 2, 30, 1).unwrap(),
            make_ncpd((8, 6, 5), 4, 2, [1e-2; 3], true, 2).unwrap(),
            make_ncpd((8, 6, 5), 4, 2, [1e-2; 3], false, 3).unwrap(),
            make_nmf(10, 8, 5, 3, 1e-2, true, 4).unwrap(),
            make_nmf(10, 8, 5, 3, 1e-2, false, 5).unwrap(),
            make_sparse_pca(9, 4, 0.1, 6).unwrap(),
            make_quadratic(&[(3, 2), (4, 1)], 1.0, 7).unwrap(),
        ];
        for prob in &probs {
            for _ in 0..3 {
                let point = prob.init_point(&mut rng);
                let specs: Vec<_> =
                    prob.block_specs.iter().map(|(s, _)| s.clone()).collect();
                let cons: Vec<_> = prob.block_specs.iter().map(|(_, c)| *c).collect();
                check_point(&specs, &cons, &point)
                    .unwrap_or_else(|e| panic!("{} init infeasible: {e}", prob.name));
            }
        }
    }

    #[test]
    fn invalid_dimensions_are_rejected() {
        assert!(make_matrix_recovery(5, 4, 5, 10, 1).is_err());
        assert!(make_matrix_recovery(5, 4, 0, 10, 1).is_err());
        assert!(make_ncpd((5, 4, 3), 2, 3, [0.0; 3], false, 1).is_err());
        assert!(make_nmf(5, 4, 3, 4, 0.1, true, 1).is_err());
        assert!(make_sparse_pca(4, 5, 0.1, 1).is_err());
    }
}

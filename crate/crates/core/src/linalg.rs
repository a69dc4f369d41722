//! Dense linear algebra kernels.
//!
//! All factorizations here are deterministic: the SVD is a one-sided Jacobi
//! iteration with a fixed sweep order, the QR is Householder with a sign fix,
//! and the power iteration takes a seeded start. Reproducibility of the whole
//! benchmark harness bottoms out in this file, so no kernel consults global
//! state or platform-dependent libraries.

use ndarray::{Array1, Array2, ShapeBuilder};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

/// Dense row-major matrix of f64. Solver state never admits NaN/Inf entries;
/// the solvers abort on the first non-finite objective instead of letting
/// poisoned values propagate here.
pub type Matrix = Array2<f64>;

/// Sweep cap for the one-sided Jacobi SVD.
pub const JACOBI_MAX_SWEEPS: usize = 30;
/// Relative off-diagonal tolerance for Jacobi convergence: a column pair
/// (i, j) counts as orthogonal when |<a_i, a_j>| <= tol * ||a_i|| * ||a_j||.
pub const JACOBI_REL_TOL: f64 = 1e-12;
/// Relative tolerance on diag(R) below which `qr_thin` reports rank
/// deficiency, measured against the largest column norm of the input.
pub const QR_RANK_REL_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum LinalgError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("jacobi svd did not converge after {0} sweeps")]
    SvdNonConvergence(usize),
    #[error("rank-deficient input: |r[{index},{index}]| = {value:.3e} below tolerance {tol:.3e}")]
    RankDeficient { index: usize, value: f64, tol: f64 },
}

/// Thin singular value decomposition A = U diag(sigma) V^T with
/// k = min(rows, cols) columns in U and V.
///
/// Invariants: U^T U = I and V^T V = I to 1e-10 max-abs; sigma is
/// nonincreasing and nonnegative; the largest-magnitude entry of every U
/// column is nonnegative (sign fix applied jointly to U and V columns).
#[derive(Debug, Clone)]
pub struct ThinSvd {
    pub u: Matrix,
    pub sigma: Array1<f64>,
    pub v: Matrix,
}

impl ThinSvd {
    /// Reassemble U diag(sigma) V^T.
    pub fn reconstruct(&self) -> Matrix {
        let k = self.sigma.len();
        let mut us = self.u.clone();
        for j in 0..k {
            let s = self.sigma[j];
            us.column_mut(j).mapv_inplace(|x| x * s);
        }
        us.dot(&self.v.t())
    }

    /// Keep the leading r triples. Caller has validated 1 <= r <= k.
    fn truncate(mut self, r: usize) -> ThinSvd {
        self.u = self.u.slice(ndarray::s![.., ..r]).to_owned();
        self.v = self.v.slice(ndarray::s![.., ..r]).to_owned();
        self.sigma = self.sigma.slice(ndarray::s![..r]).to_owned();
        self
    }
}

/// Frobenius norm.
pub fn fro_norm(a: &Matrix) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Frobenius inner product <a, b>.
pub fn fro_dot(a: &Matrix, b: &Matrix) -> f64 {
    debug_assert_eq!(a.dim(), b.dim());
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

/// Apply the plane rotation [c -s; s c] to columns i < j of a column-major
/// buffer with the given column length.
fn rotate_pair(buf: &mut [f64], len: usize, i: usize, j: usize, c: f64, s: f64) {
    let (lo, hi) = buf.split_at_mut(j * len);
    let ci = &mut lo[i * len..(i + 1) * len];
    let cj = &mut hi[..len];
    for r in 0..len {
        let wi = ci[r];
        let wj = cj[r];
        ci[r] = c * wi - s * wj;
        cj[r] = s * wi + c * wj;
    }
}

/// Thin SVD by one-sided Jacobi.
///
/// Column pairs are swept in fixed row-cyclic order, rotating until every
/// pair passes the relative orthogonality test. Non-convergence after
/// [`JACOBI_MAX_SWEEPS`] sweeps is a numerical failure, not a panic. Ties at
/// equal singular values are broken by original column order (stable sort),
/// so truncation boundaries are deterministic.
pub fn svd_thin(a: &Matrix) -> Result<ThinSvd, LinalgError> {
    let (rows, cols) = a.dim();
    if rows == 0 || cols == 0 {
        return Err(LinalgError::InvalidArgument(
            "svd_thin: empty matrix".into(),
        ));
    }
    if rows < cols {
        // One-sided Jacobi wants tall input; transpose and swap factors.
        let t = svd_thin(&a.t().to_owned())?;
        return Ok(ThinSvd {
            u: t.v,
            sigma: t.sigma,
            v: t.u,
        });
    }

    let n = cols;
    // Column-major working buffers keep each column contiguous, so the pair
    // sweeps run on slices instead of bounds-checked 2D indexing.
    let mut wk = vec![0.0f64; rows * n];
    for j in 0..n {
        for r in 0..rows {
            wk[j * rows + r] = a[[r, j]];
        }
    }
    let mut vb = vec![0.0f64; n * n];
    for j in 0..n {
        vb[j * n + j] = 1.0;
    }

    let mut converged = false;
    for _sweep in 0..JACOBI_MAX_SWEEPS {
        let mut rotated = false;
        for i in 0..n.saturating_sub(1) {
            for j in (i + 1)..n {
                let ci = &wk[i * rows..(i + 1) * rows];
                let cj = &wk[j * rows..(j + 1) * rows];
                let mut alpha = 0.0;
                let mut beta = 0.0;
                let mut gamma = 0.0;
                for r in 0..rows {
                    let wi = ci[r];
                    let wj = cj[r];
                    alpha += wi * wi;
                    beta += wj * wj;
                    gamma += wi * wj;
                }
                if gamma.abs() <= JACOBI_REL_TOL * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                // Rotation zeroing <a_i, a_j>: stable root of t^2 + 2*tau*t - 1.
                let tau = (beta - alpha) / (2.0 * gamma);
                let t = tau.signum() / (tau.abs() + (1.0 + tau * tau).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate_pair(&mut wk, rows, i, j, c, s);
                rotate_pair(&mut vb, n, i, j, c, s);
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    let work = Matrix::from_shape_vec((rows, n).f(), wk).expect("buffer matches shape");
    let v = Matrix::from_shape_vec((n, n).f(), vb).expect("buffer matches shape");
    if !converged {
        // One clean sweep is the convergence witness; a final rotation-free
        // pass may simply not have been observed yet, so re-scan.
        let mut dirty = false;
        'scan: for i in 0..n.saturating_sub(1) {
            for j in (i + 1)..n {
                let ci = work.column(i);
                let cj = work.column(j);
                let alpha: f64 = ci.iter().map(|x| x * x).sum();
                let beta: f64 = cj.iter().map(|x| x * x).sum();
                let gamma: f64 = ci.iter().zip(cj.iter()).map(|(x, y)| x * y).sum();
                if gamma.abs() > JACOBI_REL_TOL * (alpha * beta).sqrt() {
                    dirty = true;
                    break 'scan;
                }
            }
        }
        if dirty {
            return Err(LinalgError::SvdNonConvergence(JACOBI_MAX_SWEEPS));
        }
    }

    let mut sig: Vec<f64> = (0..n)
        .map(|j| work.column(j).iter().map(|x| x * x).sum::<f64>().sqrt())
        .collect();
    let mut order: Vec<usize> = (0..n).collect();
    // Stable: equal singular values keep original column order.
    order.sort_by(|&i, &j| sig[j].partial_cmp(&sig[i]).unwrap());
    sig = order.iter().map(|&i| sig[i]).collect();

    let sig_max = sig.first().copied().unwrap_or(0.0);
    let mut u = Matrix::zeros((rows, n));
    let mut vperm = Matrix::zeros((n, n));
    let mut needs_fill = Vec::new();
    for (newj, &oldj) in order.iter().enumerate() {
        vperm.column_mut(newj).assign(&v.column(oldj));
        let s = sig[newj];
        // Effectively-zero columns get an orthonormal filler below; rotated
        // nonzero columns are already mutually orthogonal to working precision.
        if s > sig_max * 1e-250 && s > 0.0 {
            let col = work.column(oldj);
            for r in 0..rows {
                u[[r, newj]] = col[r] / s;
            }
        } else {
            needs_fill.push(newj);
        }
    }
    for &j in &needs_fill {
        fill_orthonormal_column(&mut u, j, rows);
    }

    // Sign convention: largest-magnitude entry of each U column nonnegative,
    // first occurrence wins ties. V flips jointly so the product is unchanged.
    for j in 0..n {
        let mut best = 0usize;
        let mut best_abs = -1.0;
        for r in 0..rows {
            let a = u[[r, j]].abs();
            if a > best_abs {
                best_abs = a;
                best = r;
            }
        }
        if u[[best, j]] < 0.0 {
            u.column_mut(j).mapv_inplace(|x| -x);
            vperm.column_mut(j).mapv_inplace(|x| -x);
        }
    }

    Ok(ThinSvd {
        u,
        sigma: Array1::from(sig),
        v: vperm,
    })
}

/// Replace column `j` of `u` with a unit vector orthogonal to all its
/// currently nonzero columns, chosen deterministically from the standard
/// basis (best residual wins).
fn fill_orthonormal_column(u: &mut Matrix, j: usize, rows: usize) {
    let n = u.ncols();
    let mut best: Option<(f64, Vec<f64>)> = None;
    for cand in 0..rows {
        let mut w = vec![0.0; rows];
        w[cand] = 1.0;
        // Two Gram-Schmidt passes against every populated column.
        for _ in 0..2 {
            for k in 0..n {
                if k == j {
                    continue;
                }
                let col = u.column(k);
                let colnorm: f64 = col.iter().map(|x| x * x).sum();
                if colnorm < 0.5 {
                    continue; // unfilled column
                }
                let d: f64 = col.iter().zip(w.iter()).map(|(x, y)| x * y).sum();
                for r in 0..rows {
                    w[r] -= d * col[r];
                }
            }
        }
        let nrm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if best.as_ref().map_or(true, |(b, _)| nrm > *b) {
            best = Some((nrm, w));
        }
        if nrm > 0.9 {
            break; // good enough, keep scan deterministic and short
        }
    }
    let (nrm, w) = best.expect("at least one candidate basis vector");
    for r in 0..rows {
        u[[r, j]] = w[r] / nrm;
    }
}

/// Rank-r truncated SVD. The discarded tail obeys the Eckart-Young identity
/// ||A - U_r S_r V_r^T||_F = sqrt(sum_{i>r} sigma_i^2).
pub fn svd_truncated(a: &Matrix, r: usize) -> Result<ThinSvd, LinalgError> {
    let k = a.nrows().min(a.ncols());
    if r < 1 || r > k {
        return Err(LinalgError::InvalidArgument(format!(
            "svd_truncated: rank {r} out of range [1, {k}]"
        )));
    }
    Ok(svd_thin(a)?.truncate(r))
}

/// Thin Householder QR of a tall matrix (rows >= cols): A = Q R with
/// Q^T Q = I, R upper triangular with nonnegative diagonal.
///
/// Rank-deficient input (some |R[j,j]| at or below
/// [`QR_RANK_REL_TOL`] * max column norm) is an error; geometry code that has
/// to orthonormalize possibly-degenerate tangent components uses
/// [`orthonormalize_against`] instead.
pub fn qr_thin(a: &Matrix) -> Result<(Matrix, Matrix), LinalgError> {
    let (m, n) = a.dim();
    if m < n {
        return Err(LinalgError::InvalidArgument(format!(
            "qr_thin: need rows >= cols, got {m}x{n}"
        )));
    }
    if n == 0 {
        return Err(LinalgError::InvalidArgument("qr_thin: empty matrix".into()));
    }
    let col_scale = (0..n)
        .map(|j| a.column(j).iter().map(|x| x * x).sum::<f64>().sqrt())
        .fold(0.0f64, f64::max);
    let tol = QR_RANK_REL_TOL * col_scale;

    let mut r = a.clone();
    // Householder vectors stored column-wise; Q assembled afterwards.
    let mut hh: Vec<Vec<f64>> = Vec::with_capacity(n);
    for j in 0..n {
        let mut vcol = vec![0.0; m];
        let mut norm = 0.0;
        for i in j..m {
            let x = r[[i, j]];
            vcol[i] = x;
            norm += x * x;
        }
        let norm = norm.sqrt();
        let alpha = if vcol[j] >= 0.0 { -norm } else { norm };
        vcol[j] -= alpha;
        let vnorm2: f64 = vcol[j..].iter().map(|x| x * x).sum();
        if vnorm2 > 0.0 {
            for k in j..n {
                let dot: f64 = (j..m).map(|i| vcol[i] * r[[i, k]]).sum();
                let coef = 2.0 * dot / vnorm2;
                for i in j..m {
                    r[[i, k]] -= coef * vcol[i];
                }
            }
        }
        hh.push(vcol);
    }

    let mut q = Matrix::zeros((m, n));
    for j in 0..n {
        q[[j, j]] = 1.0;
    }
    for j in (0..n).rev() {
        let vcol = &hh[j];
        let vnorm2: f64 = vcol[j..].iter().map(|x| x * x).sum();
        if vnorm2 == 0.0 {
            continue;
        }
        for k in 0..n {
            let dot: f64 = (j..m).map(|i| vcol[i] * q[[i, k]]).sum();
            let coef = 2.0 * dot / vnorm2;
            for i in j..m {
                q[[i, k]] -= coef * vcol[i];
            }
        }
    }

    // Nonnegative diagonal of R; flip Q columns to compensate.
    for j in 0..n {
        if r[[j, j]] < 0.0 {
            for k in j..n {
                r[[j, k]] = -r[[j, k]];
            }
            q.column_mut(j).mapv_inplace(|x| -x);
        }
        if r[[j, j]].abs() <= tol {
            return Err(LinalgError::RankDeficient {
                index: j,
                value: r[[j, j]].abs(),
                tol,
            });
        }
    }
    let mut r_out = Matrix::zeros((n, n));
    for i in 0..n {
        for j in i..n {
            r_out[[i, j]] = r[[i, j]];
        }
    }
    Ok((q, r_out))
}

/// Orthonormalize the columns of `cols` against `existing` (assumed
/// orthonormal) and against each other, returning (Q, R) with cols = Q R,
/// Q^T Q = I, existing^T Q = 0. Callers pass `cols` already orthogonal to
/// `existing` up to roundoff (tangent components satisfy this by
/// construction); any residual overlap is cleaned off and is not represented
/// in R. Degenerate columns (numerically in the span of what came before) get
/// a deterministic orthonormal filler and a zero column in R, so Q stays
/// orthonormal and cols = Q R still holds. Modified Gram-Schmidt with one
/// reorthogonalization pass.
pub fn orthonormalize_against(existing: &Matrix, cols: &Matrix) -> (Matrix, Matrix) {
    let (m, k) = cols.dim();
    debug_assert_eq!(existing.nrows(), m);
    let ne = existing.ncols();
    let mut q = Matrix::zeros((m, k));
    let mut r = Matrix::zeros((k, k));
    for j in 0..k {
        let mut w: Vec<f64> = cols.column(j).to_vec();
        let scale = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        for _pass in 0..2 {
            for e in 0..ne {
                let col = existing.column(e);
                let d: f64 = col.iter().zip(w.iter()).map(|(x, y)| x * y).sum();
                for i in 0..m {
                    w[i] -= d * col[i];
                }
            }
            for p in 0..j {
                let col = q.column(p);
                let d: f64 = col.iter().zip(w.iter()).map(|(x, y)| x * y).sum();
                r[[p, j]] += d;
                for i in 0..m {
                    w[i] -= d * col[i];
                }
            }
        }
        let nrm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if nrm > 1e-13 * (1.0 + scale) {
            r[[j, j]] = nrm;
            for i in 0..m {
                q[[i, j]] = w[i] / nrm;
            }
        } else {
            // Dependent column: R row stays zero, Q gets a filler direction
            // orthogonal to everything seen so far.
            r[[j, j]] = 0.0;
            let filler = orthonormal_filler(existing, &q, j, m);
            for i in 0..m {
                q[[i, j]] = filler[i];
            }
        }
    }
    (q, r)
}

fn orthonormal_filler(existing: &Matrix, q: &Matrix, upto: usize, m: usize) -> Vec<f64> {
    let mut best: Option<(f64, Vec<f64>)> = None;
    for cand in 0..m {
        let mut w = vec![0.0; m];
        w[cand] = 1.0;
        for _ in 0..2 {
            for e in 0..existing.ncols() {
                let col = existing.column(e);
                let d: f64 = col.iter().zip(w.iter()).map(|(x, y)| x * y).sum();
                for i in 0..m {
                    w[i] -= d * col[i];
                }
            }
            for p in 0..upto {
                let col = q.column(p);
                let d: f64 = col.iter().zip(w.iter()).map(|(x, y)| x * y).sum();
                for i in 0..m {
                    w[i] -= d * col[i];
                }
            }
        }
        let nrm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if best.as_ref().map_or(true, |(b, _)| nrm > *b) {
            best = Some((nrm, w));
        }
        if nrm > 0.9 {
            break;
        }
    }
    let (nrm, mut w) = best.expect("ambient dimension exceeds span");
    for x in &mut w {
        *x /= nrm;
    }
    w
}

/// Elementwise soft threshold sign(x) * max(|x| - tau, 0). Negative tau is an
/// argument error; tau = 0 is the identity.
pub fn soft_threshold(x: &Matrix, tau: f64) -> Result<Matrix, LinalgError> {
    if tau < 0.0 || !tau.is_finite() {
        return Err(LinalgError::InvalidArgument(format!(
            "soft_threshold: tau must be finite and nonnegative, got {tau}"
        )));
    }
    Ok(x.mapv(|v| v.signum() * (v.abs() - tau).max(0.0)))
}

/// Power-iteration estimate of the largest eigenvalue of A^* A, i.e. the
/// squared spectral norm of the linear operator given by `apply` (matrix ->
/// vector) and `adjoint` (vector -> matrix).
///
/// The start vector is seeded Gaussian, so runs are reproducible; the
/// Rayleigh quotient of a PSD operator is nondecreasing along power
/// iterations, so more iterations never lower the estimate. A zero operator
/// returns exactly 0.
pub fn spectral_norm_sq<F, G>(
    apply: F,
    adjoint: G,
    shape: (usize, usize),
    iters: usize,
    seed: u64,
) -> f64
where
    F: Fn(&Matrix) -> Array1<f64>,
    G: Fn(&Array1<f64>) -> Matrix,
{
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v = Matrix::zeros(shape);
    for x in v.iter_mut() {
        *x = gaussian(&mut rng);
    }
    let nrm = fro_norm(&v);
    if nrm == 0.0 {
        v[[0, 0]] = 1.0;
    } else {
        v.mapv_inplace(|x| x / nrm);
    }
    let mut est = 0.0;
    for _ in 0..iters {
        let av = apply(&v);
        est = av.iter().map(|x| x * x).sum::<f64>();
        if est == 0.0 {
            return 0.0;
        }
        let mut w = adjoint(&av);
        let wn = fro_norm(&w);
        if wn == 0.0 {
            return 0.0;
        }
        w.mapv_inplace(|x| x / wn);
        v = w;
    }
    if iters == 0 {
        let av = apply(&v);
        est = av.iter().map(|x| x * x).sum::<f64>();
    }
    est
}

/// Largest eigenvalue of a small symmetric PSD matrix by power iteration from
/// a fixed all-ones start. Used for per-block Lipschitz constants of Gram
/// matrices; deterministic by construction.
pub fn sym_largest_eigenvalue(s: &Matrix, iters: usize) -> f64 {
    let n = s.nrows();
    debug_assert_eq!(n, s.ncols());
    if n == 0 {
        return 0.0;
    }
    let mut v = Array1::from_elem(n, 1.0 / (n as f64).sqrt());
    let mut est = 0.0f64;
    for _ in 0..iters.max(1) {
        let w = s.dot(&v);
        let nrm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if nrm == 0.0 {
            return 0.0;
        }
        let next = est.max(w.iter().zip(v.iter()).map(|(a, b)| a * b).sum::<f64>());
        v = w.mapv(|x| x / nrm);
        if (next - est).abs() <= 1e-14 * next.abs() {
            return next.max(0.0);
        }
        est = next;
    }
    est.max(0.0)
}

/// Standard normal draw via Box-Muller on the ChaCha stream. Kept local so
/// every consumer shares one documented sampling recipe.
pub fn gaussian<R: Rng>(rng: &mut R) -> f64 {
    loop {
        let u1: f64 = rng.gen::<f64>();
        let u2: f64 = rng.gen::<f64>();
        if u1 > f64::MIN_POSITIVE {
            return (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos();
        }
    }
}

/// Seeded Gaussian matrix.
pub fn gaussian_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> Matrix {
    let mut m = Matrix::zeros((rows, cols));
    for x in m.iter_mut() {
        *x = gaussian(rng);
    }
    m
}

/// Seeded uniform [0, 1) matrix.
pub fn uniform_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> Matrix {
    let mut m = Matrix::zeros((rows, cols));
    for x in m.iter_mut() {
        *x = rng.gen::<f64>();
    }
    m
}

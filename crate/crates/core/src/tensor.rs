//! Order-3 tensor kernels for CP decomposition: mode unfoldings and the
//! Khatri-Rao product, in the convention where the mode-n unfolding has
//! column index running over the remaining modes with the lower mode varying
//! fastest. Under that convention X_(1) = U1 (U3 kr U2)^T for a CP model.

use crate::linalg::Matrix;
use ndarray::Array3;

/// Mode-n unfolding (n in 0..3) of a dense order-3 tensor.
pub fn unfold(x: &Array3<f64>, mode: usize) -> Matrix {
    let (i1, i2, i3) = x.dim();
    match mode {
        0 => {
            let mut m = Matrix::zeros((i1, i2 * i3));
            for a in 0..i1 {
                for b in 0..i2 {
                    for c in 0..i3 {
                        m[[a, b + c * i2]] = x[[a, b, c]];
                    }
                }
            }
            m
        }
        1 => {
            let mut m = Matrix::zeros((i2, i1 * i3));
            for a in 0..i1 {
                for b in 0..i2 {
                    for c in 0..i3 {
                        m[[b, a + c * i1]] = x[[a, b, c]];
                    }
                }
            }
            m
        }
        2 => {
            let mut m = Matrix::zeros((i3, i1 * i2));
            for a in 0..i1 {
                for b in 0..i2 {
                    for c in 0..i3 {
                        m[[c, a + b * i1]] = x[[a, b, c]];
                    }
                }
            }
            m
        }
        _ => panic!("mode out of range for an order-3 tensor: {mode}"),
    }
}

/// Columnwise Khatri-Rao product: column r of the result is the Kronecker
/// product of column r of `a` with column r of `b`, so the row index is
/// (row of a) * nrows(b) + (row of b).
pub fn khatri_rao(a: &Matrix, b: &Matrix) -> Matrix {
    assert_eq!(a.ncols(), b.ncols(), "khatri-rao needs equal column counts");
    let (ia, ib, r) = (a.nrows(), b.nrows(), a.ncols());
    let mut m = Matrix::zeros((ia * ib, r));
    for col in 0..r {
        for p in 0..ia {
            let ap = a[[p, col]];
            for q in 0..ib {
                m[[p * ib + q, col]] = ap * b[[q, col]];
            }
        }
    }
    m
}

/// Assemble a rank-R CP model from its loadings as an order-3 tensor.
pub fn cp_tensor(u1: &Matrix, u2: &Matrix, u3: &Matrix) -> Array3<f64> {
    let (i1, i2, i3) = (u1.nrows(), u2.nrows(), u3.nrows());
    let r = u1.ncols();
    let mut x = Array3::zeros((i1, i2, i3));
    for k in 0..r {
        for a in 0..i1 {
            let ua = u1[[a, k]];
            for b in 0..i2 {
                let ub = u2[[b, k]] * ua;
                for c in 0..i3 {
                    x[[a, b, c]] += ub * u3[[c, k]];
                }
            }
        }
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{fro_norm, gaussian_matrix};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn unfoldings_are_consistent_with_khatri_rao_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let u1 = gaussian_matrix(&mut rng, 4, 3);
        let u2 = gaussian_matrix(&mut rng, 5, 3);
        let u3 = gaussian_matrix(&mut rng, 6, 3);
        let x = cp_tensor(&u1, &u2, &u3);

        let m1 = unfold(&x, 0);
        let m2 = unfold(&x, 1);
        let m3 = unfold(&x, 2);
        let r1 = u1.dot(&khatri_rao(&u3, &u2).t());
        let r2 = u2.dot(&khatri_rao(&u3, &u1).t());
        let r3 = u3.dot(&khatri_rao(&u2, &u1).t());
        assert!(fro_norm(&(&m1 - &r1)) <= 1e-12 * fro_norm(&m1));
        assert!(fro_norm(&(&m2 - &r2)) <= 1e-12 * fro_norm(&m2));
        assert!(fro_norm(&(&m3 - &r3)) <= 1e-12 * fro_norm(&m3));
    }

    #[test]
    fn unfolding_preserves_frobenius_norm() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let u1 = gaussian_matrix(&mut rng, 3, 2);
        let u2 = gaussian_matrix(&mut rng, 4, 2);
        let u3 = gaussian_matrix(&mut rng, 5, 2);
        let x = cp_tensor(&u1, &u2, &u3);
        let direct: f64 = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        for mode in 0..3 {
            assert!((fro_norm(&unfold(&x, mode)) - direct).abs() <= 1e-12 * direct);
        }
    }

    #[test]
    fn khatri_rao_gram_is_hadamard_of_grams() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = gaussian_matrix(&mut rng, 6, 4);
        let b = gaussian_matrix(&mut rng, 7, 4);
        let kr = khatri_rao(&a, &b);
        let gram = kr.t().dot(&kr);
        let mut want = a.t().dot(&a);
        let gb = b.t().dot(&b);
        want.zip_mut_with(&gb, |x, y| *x *= y);
        assert!(fro_norm(&(&gram - &want)) <= 1e-12 * fro_norm(&want).max(1.0));
    }
}

use super::matrix::Matrix;
use super::LinalgError;

/// Complete QR factorization `m = q * Inc * r` where `q` is square
/// orthogonal (`n x n`), `r` is upper-trapezoidal (`min(n, c) x c`) with a
/// non-negative diagonal, and `Inc` is the `n x min(n, c)` coordinate
/// inclusion. Entries of `r` below the diagonal are stored zeros.
#[derive(Debug, Clone)]
pub struct CompleteQR {
    pub q: Matrix,
    pub r: Matrix,
}

impl CompleteQR {
    /// `q * Inc * r`, i.e. the first `min(n, c)` columns of `q` times `r`.
    pub fn reconstruct(&self) -> Matrix {
        let k = self.r.rows();
        let q1 = self.q.block(0, self.q.rows(), 0, k);
        q1.matmul(&self.r)
    }
}

/// Householder QR with the sign of each reflector fixed so the diagonal of
/// `r` comes out non-negative. Deterministic: identical input bytes produce
/// identical output bytes.
pub fn complete_qr(m: &Matrix) -> Result<CompleteQR, LinalgError> {
    if !m.is_finite() {
        return Err(LinalgError::NonFiniteInput);
    }
    let n = m.rows();
    let c = m.cols();
    let k = n.min(c);

    let mut a = m.clone();
    let mut q = Matrix::identity(n);
    let mut v = vec![0.0; n];

    for j in 0..k {
        let norm_x = {
            let mut s = 0.0;
            for i in j..n {
                s += a[(i, j)] * a[(i, j)];
            }
            s.sqrt()
        };
        if norm_x == 0.0 {
            continue;
        }
        // Reflector v = x - alpha e_1 with alpha chosen to avoid cancellation.
        let alpha = if a[(j, j)] >= 0.0 { -norm_x } else { norm_x };
        v[j] = a[(j, j)] - alpha;
        for i in j + 1..n {
            v[i] = a[(i, j)];
        }
        let vtv: f64 = (j..n).map(|i| v[i] * v[i]).sum();

        // a <- H a on columns j..c
        for col in j..c {
            let w: f64 = (j..n).map(|i| v[i] * a[(i, col)]).sum();
            let f = 2.0 * w / vtv;
            for i in j..n {
                a[(i, col)] -= f * v[i];
            }
        }
        a[(j, j)] = alpha;
        for i in j + 1..n {
            a[(i, j)] = 0.0;
        }

        // q <- q H (accumulating the product of reflectors)
        for row in 0..n {
            let w: f64 = (j..n).map(|i| v[i] * q[(row, i)]).sum();
            let f = 2.0 * w / vtv;
            for i in j..n {
                q[(row, i)] -= f * v[i];
            }
        }
    }

    // Flip signs so the diagonal of r is non-negative.
    for j in 0..k {
        if a[(j, j)] < 0.0 {
            for col in j..c {
                a[(j, col)] = -a[(j, col)];
            }
            for row in 0..n {
                q[(row, j)] = -q[(row, j)];
            }
        }
    }

    let mut r = a.block(0, k, 0, c);
    for i in 0..k {
        for jj in 0..i.min(c) {
            r[(i, jj)] = 0.0;
        }
        if i < c && r[(i, i)] == 0.0 {
            r[(i, i)] = 0.0; // normalize -0.0
        }
    }

    Ok(CompleteQR { q, r })
}

/// Left inverse of an injective `n x k` matrix, computed as `R^-1 Q1^T`
/// from the QR factorization (equivalently the Moore-Penrose pseudoinverse
/// for full column rank).
pub fn left_inverse(b: &Matrix) -> Result<Matrix, LinalgError> {
    if !b.is_finite() {
        return Err(LinalgError::NonFiniteInput);
    }
    let n = b.rows();
    let k = b.cols();
    if k > n {
        return Err(LinalgError::RankDeficient);
    }
    if k == 0 {
        return Ok(Matrix::zeros(0, n));
    }
    let qr = complete_qr(b)?;
    let r = &qr.r; // k x k upper triangular

    let scale = (0..k).fold(0.0f64, |m, i| m.max(r[(i, i)].abs()));
    let tol = (n.max(k) as f64) * f64::EPSILON * scale;
    if scale == 0.0 || (0..k).any(|i| r[(i, i)].abs() <= tol) {
        return Err(LinalgError::RankDeficient);
    }

    // Solve R C = Q1^T by back substitution, one column of C at a time.
    let q1t = qr.q.block(0, n, 0, k).transpose(); // k x n
    let mut cmat = Matrix::zeros(k, n);
    for col in 0..n {
        for i in (0..k).rev() {
            let mut s = q1t[(i, col)];
            for j in i + 1..k {
                s -= r[(i, j)] * cmat[(j, col)];
            }
            cmat[(i, col)] = s / r[(i, i)];
        }
    }
    Ok(cmat)
}

/// Column permutation placing `k` linearly independent columns first,
/// found by greedy column-pivoted QR (largest remaining residual norm
/// first, exact ties broken by lowest original column index). The result
/// `perm` is such that permuted column `t` is original column `perm[t]`.
pub fn pivot_permutation(m: &Matrix, k: usize) -> Result<Vec<usize>, LinalgError> {
    if !m.is_finite() {
        return Err(LinalgError::NonFiniteInput);
    }
    let n = m.rows();
    let c = m.cols();
    if k > n.min(c) {
        return Err(LinalgError::RankMismatch {
            requested: k,
            achieved: n.min(c),
        });
    }

    let mut a = m.clone();
    let mut perm: Vec<usize> = (0..c).collect();
    let initial_max = (0..c).fold(0.0f64, |mx, j| {
        mx.max((0..n).map(|i| a[(i, j)] * a[(i, j)]).sum::<f64>().sqrt())
    });
    let tol = (n.max(c) as f64) * f64::EPSILON * initial_max;
    let mut v = vec![0.0; n];

    for t in 0..k {
        // Residual norm of each remaining column below the eliminated rows.
        let mut best = t;
        let mut best_norm = -1.0f64;
        for j in t..c {
            let nj = (t..n).map(|i| a[(i, j)] * a[(i, j)]).sum::<f64>().sqrt();
            if nj > best_norm || (nj == best_norm && perm[j] < perm[best]) {
                best = j;
                best_norm = nj;
            }
        }
        if best_norm <= tol {
            return Err(LinalgError::RankMismatch {
                requested: k,
                achieved: t,
            });
        }
        if best != t {
            for i in 0..n {
                let tmp = a[(i, t)];
                a[(i, t)] = a[(i, best)];
                a[(i, best)] = tmp;
            }
            perm.swap(t, best);
        }

        // Householder elimination of column t below the diagonal.
        let alpha = if a[(t, t)] >= 0.0 {
            -best_norm
        } else {
            best_norm
        };
        v[t] = a[(t, t)] - alpha;
        for i in t + 1..n {
            v[i] = a[(i, t)];
        }
        let vtv: f64 = (t..n).map(|i| v[i] * v[i]).sum();
        if vtv == 0.0 {
            continue;
        }
        for col in t..c {
            let w: f64 = (t..n).map(|i| v[i] * a[(i, col)]).sum();
            let f = 2.0 * w / vtv;
            for i in t..n {
                a[(i, col)] -= f * v[i];
            }
        }
        a[(t, t)] = alpha;
        for i in t + 1..n {
            a[(i, t)] = 0.0;
        }
    }

    Ok(perm)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assert_close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b}");
    }

    #[test]
    fn qr_of_identity() {
        let qr = complete_qr(&Matrix::identity(4)).unwrap();
        assert_eq!(qr.q, Matrix::identity(4));
        assert_eq!(qr.r, Matrix::identity(4));
    }

    #[test]
    fn qr_of_single_column() {
        // Hand computation: ||(3,4)|| = 5, unit direction (0.6, 0.8).
        let m = Matrix::column(&[3.0, 4.0]);
        let qr = complete_qr(&m).unwrap();
        assert_eq!(qr.r.rows(), 1);
        assert_close(qr.r[(0, 0)], 5.0, 1e-14);
        assert_close(qr.q[(0, 0)], 0.6, 1e-14);
        assert_close(qr.q[(1, 0)], 0.8, 1e-14);
        assert!(qr.reconstruct().max_abs_diff(&m) < 1e-14);
    }

    #[test]
    fn qr_zero_columns() {
        let m = Matrix::zeros(3, 0);
        let qr = complete_qr(&m).unwrap();
        assert_eq!(qr.q, Matrix::identity(3));
        assert_eq!(qr.r.rows(), 0);
        assert_eq!(qr.r.cols(), 0);
    }

    #[test]
    fn qr_rejects_non_finite() {
        let m = Matrix::from_rows(&[&[1.0, f64::NAN]]);
        assert_eq!(complete_qr(&m).unwrap_err(), LinalgError::NonFiniteInput);
    }

    #[test]
    fn qr_wide_matrix_shapes() {
        let m = Matrix::from_rows(&[&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]]);
        let qr = complete_qr(&m).unwrap();
        assert_eq!(qr.q.rows(), 2);
        assert_eq!(qr.r.rows(), 2);
        assert_eq!(qr.r.cols(), 3);
        assert!(qr.reconstruct().max_abs_diff(&m) < 1e-13);
        assert!(qr.r[(0, 0)] >= 0.0 && qr.r[(1, 1)] >= 0.0);
        assert_eq!(qr.r[(1, 0)], 0.0);
    }

    #[test]
    fn left_inverse_of_identity_and_inclusion() {
        let c = left_inverse(&Matrix::identity(3)).unwrap();
        assert!(c.max_abs_diff(&Matrix::identity(3)) < 1e-14);

        // Coordinate inclusion R^2 -> R^3 has the coordinate projection as
        // its pseudoinverse.
        let inc = Matrix::inclusion(3, 2);
        let c = left_inverse(&inc).unwrap();
        assert!(c.max_abs_diff(&Matrix::inclusion(3, 2).transpose()) < 1e-14);
    }

    #[test]
    fn left_inverse_detects_deficiency() {
        let b = Matrix::from_rows(&[&[1.0, 2.0], &[2.0, 4.0], &[3.0, 6.0]]);
        assert_eq!(left_inverse(&b).unwrap_err(), LinalgError::RankDeficient);
    }

    #[test]
    fn pivot_prefers_nonzero_column() {
        let m = Matrix::from_rows(&[&[0.0, 1.0], &[0.0, 2.0]]);
        let perm = pivot_permutation(&m, 1).unwrap();
        assert_eq!(perm[0], 1);
    }

    #[test]
    fn pivot_duplicate_columns() {
        // col0 = col1, col2 independent; greedy must end up spanning rank 2.
        let m = Matrix::from_rows(&[&[1.0, 1.0, 0.0], &[1.0, 1.0, 1.0]]);
        let perm = pivot_permutation(&m, 2).unwrap();
        assert_eq!(perm[0], 0); // tie broken by lowest index
        let p = m.permute_cols(&perm);
        let first_two = p.block(0, 2, 0, 2);
        let qr = complete_qr(&first_two).unwrap();
        assert!(qr.r[(1, 1)].abs() > 1e-12);
    }

    #[test]
    fn pivot_rank_mismatch() {
        let m = Matrix::from_rows(&[&[1.0, 2.0], &[2.0, 4.0]]);
        assert_eq!(
            pivot_permutation(&m, 2).unwrap_err(),
            LinalgError::RankMismatch {
                requested: 2,
                achieved: 1
            }
        );
    }
}

use super::matrix::{dot, norm, Matrix};
use super::LinalgError;

const MAX_SWEEPS: usize = 60;

/// Thin SVD `m = u * diag(sigma) * v^T` via one-sided Jacobi rotations.
/// Singular values come back sorted in descending order; `u` is
/// `rows x min`, `v` is `cols x min`. Columns of `u` paired with zero
/// singular values are zero.
pub fn svd(m: &Matrix) -> Result<(Matrix, Vec<f64>, Matrix), LinalgError> {
    if !m.is_finite() {
        return Err(LinalgError::NonFiniteInput);
    }
    if m.rows() >= m.cols() {
        Ok(jacobi_tall(m))
    } else {
        let (u, s, v) = jacobi_tall(&m.transpose());
        Ok((v, s, u))
    }
}

/// Singular values of `m`, descending.
pub fn singular_values(m: &Matrix) -> Result<Vec<f64>, LinalgError> {
    svd(m).map(|(_, s, _)| s)
}

/// Number of singular values strictly above `tol`. When `tol` is `None`
/// the default `max(rows, cols) * eps * sigma_max` is used.
pub fn numerical_rank(m: &Matrix, tol: Option<f64>) -> Result<usize, LinalgError> {
    if !m.is_finite() {
        return Err(LinalgError::NonFiniteInput);
    }
    if m.rows() == 0 || m.cols() == 0 {
        return Ok(0);
    }
    if let Some(t) = tol {
        assert!(t >= 0.0, "rank tolerance must be non-negative");
    }
    let sigma = singular_values(m)?;
    let sigma_max = sigma.first().copied().unwrap_or(0.0);
    let t = tol.unwrap_or_else(|| (m.rows().max(m.cols()) as f64) * f64::EPSILON * sigma_max);
    Ok(sigma.iter().filter(|&&s| s > t).count())
}

/// One-sided Jacobi on a tall matrix (rows >= cols): rotate column pairs
/// until they are mutually orthogonal, then read off singular values as
/// column norms.
fn jacobi_tall(m: &Matrix) -> (Matrix, Vec<f64>, Matrix) {
    let n = m.rows();
    let c = m.cols();
    let mut cols: Vec<Vec<f64>> = (0..c).map(|j| m.col_vec(j)).collect();
    let mut vcols: Vec<Vec<f64>> = (0..c)
        .map(|j| {
            let mut e = vec![0.0; c];
            e[j] = 1.0;
            e
        })
        .collect();

    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..c.saturating_sub(1) {
            for q in p + 1..c {
                let app = dot(&cols[p], &cols[p]);
                let aqq = dot(&cols[q], &cols[q]);
                let apq = dot(&cols[p], &cols[q]);
                if apq == 0.0 || apq.abs() <= f64::EPSILON * (app * aqq).sqrt() {
                    continue;
                }
                let zeta = (aqq - app) / (2.0 * apq);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let cs = 1.0 / (1.0 + t * t).sqrt();
                let sn = cs * t;
                rotate_pair(&mut cols, p, q, cs, sn);
                rotate_pair(&mut vcols, p, q, cs, sn);
                rotated = true;
            }
        }
        if !rotated {
            break;
        }
    }

    finish_jacobi(n, c, cols, vcols)
}

/// Applies the plane rotation to columns `p < q` in place.
fn rotate_pair(cols: &mut [Vec<f64>], p: usize, q: usize, cs: f64, sn: f64) {
    let (head, tail) = cols.split_at_mut(q);
    let (colp, colq) = (&mut head[p], &mut tail[0]);
    for (xp, xq) in colp.iter_mut().zip(colq.iter_mut()) {
        let (a, b) = (*xp, *xq);
        *xp = cs * a - sn * b;
        *xq = sn * a + cs * b;
    }
}

fn finish_jacobi(
    n: usize,
    c: usize,
    cols: Vec<Vec<f64>>,
    vcols: Vec<Vec<f64>>,
) -> (Matrix, Vec<f64>, Matrix) {
    let mut order: Vec<usize> = (0..c).collect();
    let norms: Vec<f64> = cols.iter().map(|col| norm(col)).collect();
    order.sort_by(|&a, &b| norms[b].partial_cmp(&norms[a]).unwrap().then(a.cmp(&b)));

    let mut u = Matrix::zeros(n, c);
    let mut v = Matrix::zeros(c, c);
    let mut sigma = Vec::with_capacity(c);
    for (jj, &j) in order.iter().enumerate() {
        let s = norms[j];
        sigma.push(s);
        if s > 0.0 {
            for i in 0..n {
                u[(i, jj)] = cols[j][i] / s;
            }
        }
        for i in 0..c {
            v[(i, jj)] = vcols[j][i];
        }
    }
    (u, sigma, v)
}

/// Best approximation of `m` keeping only singular values above
/// `threshold` (used by the lossy compression mode).
pub fn truncate_singular_values(
    m: &Matrix,
    threshold: f64,
) -> Result<(Matrix, usize), LinalgError> {
    let (u, sigma, v) = svd(m)?;
    let kept = sigma.iter().filter(|&&s| s > threshold).count();
    let mut out = Matrix::zeros(m.rows(), m.cols());
    for j in 0..kept {
        for r in 0..m.rows() {
            let us = u[(r, j)] * sigma[j];
            if us == 0.0 {
                continue;
            }
            for c in 0..m.cols() {
                out[(r, c)] += us * v[(c, j)];
            }
        }
    }
    Ok((out, kept))
}

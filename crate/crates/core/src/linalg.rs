//! Dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Singular values of `a`, largest first.
pub fn singular_values(a: &DMatrix<f64>) -> Vec<f64> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return vec![];
    }
    let mut s: Vec<f64> = a.clone().svd(false, false).singular_values.iter().copied().collect();
    s.sort_by(|x, y| y.partial_cmp(x).unwrap());
    s
}

/// Numerical rank with singular values below `rel_tol * s_max` treated as zero.
pub fn rank(a: &DMatrix<f64>, rel_tol: f64) -> usize {
    let s = singular_values(a);
    match s.first() {
        None => 0,
        Some(&smax) if smax == 0.0 => 0,
        Some(&smax) => s.iter().filter(|&&x| x > rel_tol * smax).count(),
    }
}

/// Dimension of the null space of `a` (as a map on `R^ncols`).
pub fn nullspace_dim(a: &DMatrix<f64>, rel_tol: f64) -> usize {
    a.ncols() - rank(a, rel_tol)
}

/// Orthonormal basis (as columns) of the span of the rows of `rows`.
pub fn row_space_basis(rows: &DMatrix<f64>, rel_tol: f64) -> DMatrix<f64> {
    let n = rows.ncols();
    if rows.nrows() == 0 {
        return DMatrix::zeros(n, 0);
    }
    // SVD of the transpose so that U spans the row space.
    let t = rows.transpose();
    let svd = t.svd(true, false);
    let u = svd.u.unwrap();
    let s = &svd.singular_values;
    let smax = s.iter().cloned().fold(0.0, f64::max);
    let keep: Vec<usize> = (0..s.len()).filter(|&i| s[i] > rel_tol * smax).collect();
    let mut q = DMatrix::zeros(n, keep.len());
    for (j, &i) in keep.iter().enumerate() {
        q.set_column(j, &u.column(i));
    }
    q
}

/// Largest relative distance of the given vectors from the column span of
/// the orthonormal matrix `q`.
pub fn max_relative_residual(q: &DMatrix<f64>, vectors: &DMatrix<f64>) -> f64 {
    let mut worst: f64 = 0.0;
    for r in 0..vectors.nrows() {
        let v: DVector<f64> = vectors.row(r).transpose();
        let nv = v.norm();
        if nv == 0.0 {
            continue;
        }
        let proj = q * (q.transpose() * &v);
        worst = worst.max((v - proj).norm() / nv);
    }
    worst
}

/// Builds a matrix whose rows are the given vectors.
pub fn rows_to_matrix(rows: &[Vec<f64>], ncols: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(rows.len(), ncols);
    for (i, r) in rows.iter().enumerate() {
        for (j, v) in r.iter().enumerate() {
            m[(i, j)] = *v;
        }
    }
    m
}

/// Greedy selection of linearly independent rows (in the given order).
pub fn independent_rows(rows: &[Vec<f64>], rel_tol: f64) -> Vec<usize> {
    let mut basis: Vec<DVector<f64>> = Vec::new();
    let mut picked = Vec::new();
    for (i, r) in rows.iter().enumerate() {
        let mut v = DVector::from_vec(r.clone());
        let nv = v.norm();
        if nv == 0.0 {
            continue;
        }
        // two passes of modified Gram-Schmidt
        for _ in 0..2 {
            for b in &basis {
                let c = b.dot(&v);
                v -= b * c;
            }
        }
        let nr = v.norm();
        if nr > rel_tol * nv {
            basis.push(v / nr);
            picked.push(i);
        }
    }
    picked
}

/// Eigenvalues (ascending) of a real symmetric matrix.
pub fn symmetric_eigenvalues(a: &DMatrix<f64>) -> Vec<f64> {
    let mut e: Vec<f64> = a.clone().symmetric_eigenvalues().iter().copied().collect();
    e.sort_by(|x, y| x.partial_cmp(y).unwrap());
    e
}

pub fn hermitian_deviation(h: &DMatrix<Complex64>) -> f64 {
    let n = h.nrows();
    let mut dev: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            dev = dev.max((h[(i, j)] - h[(j, i)].conj()).norm());
        }
    }
    dev
}

/// Full spectrum of a Hermitian matrix, ascending.
///
/// Fails when the matrix deviates from Hermitian by more than `1e-10`
/// relative to its largest entry.
pub fn hermitian_eigenvalues(h: &DMatrix<Complex64>) -> Result<Vec<f64>> {
    if h.nrows() != h.ncols() {
        return Err(Error::InvalidInput("matrix is not square".into()));
    }
    let scale = h.iter().map(|z| z.norm()).fold(0.0, f64::max).max(1.0);
    let dev = hermitian_deviation(h);
    if dev > 1e-10 * scale {
        return Err(Error::NotHermitian(dev));
    }
    let mut e: Vec<f64> = h.clone().symmetric_eigenvalues().iter().copied().collect();
    e.sort_by(|x, y| x.partial_cmp(y).unwrap());
    Ok(e)
}

/// Eigenpairs of a Hermitian matrix with residuals `||Hv - lambda v||`.
pub fn hermitian_eigenpairs(h: &DMatrix<Complex64>) -> Result<Vec<(f64, f64)>> {
    hermitian_eigenvalues(h)?;
    let eig = h.clone().symmetric_eigen();
    let mut out = Vec::with_capacity(h.nrows());
    for (k, &lam) in eig.eigenvalues.iter().enumerate() {
        let v = eig.eigenvectors.column(k).into_owned();
        let r = (h * &v - v.map(|z| z * lam)).norm();
        out.push((lam, r));
    }
    out.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_by_two_spectrum() {
        let h = DMatrix::from_row_slice(
            2,
            2,
            &[
                Complex64::new(2.0, 0.0),
                Complex64::new(1.0, 0.0),
                Complex64::new(1.0, 0.0),
                Complex64::new(2.0, 0.0),
            ],
        );
        let e = hermitian_eigenvalues(&h).unwrap();
        assert!((e[0] - 1.0).abs() < 1e-14 && (e[1] - 3.0).abs() < 1e-14);
    }

    #[test]
    fn diagonal_spectrum() {
        let d = [3.0, -1.0, 0.5, 7.0];
        let h = DMatrix::from_fn(4, 4, |i, j| {
            if i == j {
                Complex64::new(d[i], 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            }
        });
        let e = hermitian_eigenvalues(&h).unwrap();
        assert_eq!(e, vec![-1.0, 0.5, 3.0, 7.0]);
    }

    #[test]
    fn non_hermitian_rejected() {
        let h = DMatrix::from_row_slice(
            2,
            2,
            &[
                Complex64::new(1.0, 0.0),
                Complex64::new(0.0, 1.0),
                Complex64::new(0.0, 1.0),
                Complex64::new(1.0, 0.0),
            ],
        );
        assert!(matches!(hermitian_eigenvalues(&h), Err(Error::NotHermitian(_))));
    }

    #[test]
    fn independent_row_selection() {
        let rows = vec![vec![1.0, 0.0, 0.0], vec![2.0, 0.0, 0.0], vec![0.0, 1.0, 1.0], vec![1.0, 1.0, 1.0]];
        assert_eq!(independent_rows(&rows, 1e-12), vec![0, 2]);
    }
}

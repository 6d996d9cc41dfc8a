//! Dense helpers on top of `nalgebra` shared by the solvers.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Relative cutoff below which eigenvalues count as zero in pseudo-inverses.
pub const RANK_CUTOFF: f64 = 1e-10;

/// Eigen-decomposition with eigenvalues sorted ascending and eigenvectors
/// permuted to match.
pub fn sorted_eigen(matrix: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let n = matrix.nrows();
    let eig = SymmetricEigen::new(matrix.clone());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = DVector::from_iterator(n, order.iter().map(|&k| eig.eigenvalues[k]));
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, vectors)
}

/// Moore-Penrose inverse of a symmetric positive semidefinite matrix.
///
/// Eigenvalues at or below `RANK_CUTOFF * λ_max` are dropped.
pub fn psd_pseudo_inverse(matrix: &DMatrix<f64>) -> DMatrix<f64> {
    let n = matrix.nrows();
    if n == 0 {
        return DMatrix::zeros(0, 0);
    }
    let (values, vectors) = sorted_eigen(matrix);
    let lambda_max = values.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
    let cutoff = RANK_CUTOFF * lambda_max;
    let mut pinv = DMatrix::zeros(n, n);
    if lambda_max == 0.0 {
        return pinv;
    }
    for k in 0..n {
        let lambda = values[k];
        if lambda > cutoff {
            let v = vectors.column(k);
            pinv += (v * v.transpose()) / lambda;
        }
    }
    pinv
}

/// Inverse of a symmetric positive definite matrix via Cholesky.
pub fn spd_inverse(matrix: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let chol = matrix.clone().cholesky().ok_or(Error::Singular)?;
    Ok(chol.inverse())
}

/// Solves `matrix * x = rhs` for symmetric positive definite `matrix`.
pub fn spd_solve(matrix: &DMatrix<f64>, rhs: &DVector<f64>) -> Result<DVector<f64>> {
    let chol = matrix.clone().cholesky().ok_or(Error::Singular)?;
    Ok(chol.solve(rhs))
}

pub fn check_symmetric(matrix: &DMatrix<f64>, tol: f64) -> Result<()> {
    if matrix.nrows() != matrix.ncols() {
        return Err(Error::NotSymmetric);
    }
    let scale = matrix.amax().max(1.0);
    for i in 0..matrix.nrows() {
        for j in (i + 1)..matrix.ncols() {
            if (matrix[(i, j)] - matrix[(j, i)]).abs() > tol * scale {
                return Err(Error::NotSymmetric);
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pseudo_inverse_of_path_laplacian_is_moore_penrose() {
        let l = DMatrix::from_row_slice(3, 3, &[1.0, -1.0, 0.0, -1.0, 2.0, -1.0, 0.0, -1.0, 1.0]);
        let p = psd_pseudo_inverse(&l);
        assert!((&l * &p * &l - &l).amax() < 1e-12);
        assert!((&p * &l * &p - &p).amax() < 1e-12);
    }

    #[test]
    fn zero_matrix_pseudo_inverse_is_zero() {
        assert_eq!(psd_pseudo_inverse(&DMatrix::zeros(3, 3)), DMatrix::zeros(3, 3));
    }

    #[test]
    fn sorted_eigen_is_ascending() {
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        let (values, vectors) = sorted_eigen(&m);
        assert!((values[0] - 1.0).abs() < 1e-12 && (values[1] - 3.0).abs() < 1e-12);
        let v = vectors.column(0);
        assert!((&m * v - v * values[0]).amax() < 1e-12);
    }

    #[test]
    fn rejects_asymmetric() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 1.0]);
        assert!(matches!(check_symmetric(&m, 1e-12), Err(Error::NotSymmetric)));
    }
}

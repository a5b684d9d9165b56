//! Positive semi-definite repair of correlation matrices.

use nalgebra::{DMatrix, SymmetricEigen};

/// Eigenvalues below this are treated as negative when deciding whether a
/// matrix needs repair.
pub const PSD_TOL: f64 = 1e-12;

const MAX_ITER: usize = 10_000;
const CONVERGENCE: f64 = 1e-12;

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(m.clone()).eigenvalues.min()
}

fn clip_eigen(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(m.clone());
    let clipped = eig.eigenvalues.map(|v| v.max(0.0));
    let out = &eig.eigenvectors * DMatrix::from_diagonal(&clipped) * eig.eigenvectors.transpose();
    (&out + out.transpose()) * 0.5
}

/// Nearest correlation matrix in the Frobenius norm via alternating
/// projections with Dykstra's correction (Higham, 2002).
///
/// The iterate is finally projected onto the PSD cone once more and rescaled
/// to unit diagonal, so the result is PSD to rounding with an exact unit
/// diagonal.
pub fn nearest_correlation(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let mut y = (a + a.transpose()) * 0.5;
    let mut ds = DMatrix::<f64>::zeros(n, n);
    for _ in 0..MAX_ITER {
        let r = &y - &ds;
        let x = clip_eigen(&r);
        ds = &x - &r;
        let mut next = x.clone();
        for i in 0..n {
            next[(i, i)] = 1.0;
        }
        let change = (&next - &y).norm() / next.norm().max(1.0);
        let gap = (&next - &x).norm();
        y = next;
        if change < CONVERGENCE && gap < 1e-10 {
            break;
        }
    }
    let x = clip_eigen(&y);
    let d: Vec<f64> = (0..n).map(|i| x[(i, i)].max(f64::MIN_POSITIVE).sqrt()).collect();
    let mut out = DMatrix::from_fn(n, n, |i, j| x[(i, j)] / (d[i] * d[j]));
    for i in 0..n {
        out[(i, i)] = 1.0;
        for j in 0..i {
            let v = (0.5 * (out[(i, j)] + out[(j, i)])).clamp(-1.0, 1.0);
            out[(i, j)] = v;
            out[(j, i)] = v;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn equicorrelation(n: usize, rho: f64) -> DMatrix<f64> {
        DMatrix::from_fn(n, n, |i, j| if i == j { 1.0 } else { rho })
    }

    #[test]
    fn valid_matrix_is_fixed_point() {
        let m = equicorrelation(5, 0.3);
        let out = nearest_correlation(&m);
        assert!((&out - &m).amax() < 1e-10);
    }

    #[test]
    fn repairs_negative_equicorrelation() {
        // Eigenvalues of the n x n equicorrelation matrix: 1 + (n-1) rho (once)
        // and 1 - rho. The nearest correlation matrix is the equicorrelation
        // matrix at the PSD boundary rho = -1 / (n - 1).
        let n = 8;
        let m = equicorrelation(n, -0.3);
        assert!(min_eigenvalue(&m) < 0.0);
        assert!((min_eigenvalue(&m) - (1.0 + 7.0 * -0.3)).abs() < 1e-12);
        let out = nearest_correlation(&m);
        assert!(min_eigenvalue(&out) > -1e-10);
        for i in 0..n {
            assert_eq!(out[(i, i)], 1.0);
            for j in 0..n {
                if i != j {
                    assert!((out[(i, j)] + 1.0 / 7.0).abs() < 1e-6, "{}", out[(i, j)]);
                }
            }
        }
    }

    #[test]
    fn repairs_indefinite_three_by_three() {
        // Published four-digit solution for this matrix.
        let m = DMatrix::from_row_slice(3, 3, &[1.0, 1.0, 0.0, 1.0, 1.0, 1.0, 0.0, 1.0, 1.0]);
        let out = nearest_correlation(&m);
        assert!(min_eigenvalue(&out) > -1e-10);
        assert!((out[(0, 1)] - 0.7607).abs() < 1e-3);
        assert!((out[(0, 2)] - 0.1573).abs() < 1e-3);
        assert_eq!(out, out.transpose());
    }
}

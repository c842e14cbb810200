//! Small dense helpers shared by the block solvers.
//!
//! Every matrix handled here is one block of a larger structured operator, so
//! sizes are tiny (state or measurement dimension) and plain dense
//! factorizations are used throughout.

use alloc::vec::Vec;
use nalgebra::{DMatrix, DVector};

/// Relative cutoff below which eigenvalues of a covariance are treated as zero.
pub const PINV_RCOND: f64 = 1e-10;

pub(crate) fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}

pub(crate) fn abs(x: f64) -> f64 {
    libm::fabs(x)
}

/// Largest absolute entry.
pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0, |acc, v| acc.max(abs(*v)))
}

pub fn is_symmetric(m: &DMatrix<f64>, rel_tol: f64) -> bool {
    if !m.is_square() {
        return false;
    }
    let scale = max_abs(m).max(f64::MIN_POSITIVE);
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            if abs(m[(i, j)] - m[(j, i)]) > rel_tol * scale {
                return false;
            }
        }
    }
    true
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Smallest eigenvalue of the symmetric part of `m`.
pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    let eig = symmetrize(m).symmetric_eigen();
    eig.eigenvalues.iter().fold(f64::INFINITY, |a, &b| a.min(b))
}

/// Largest eigenvalue of the symmetric part of `m`.
pub fn max_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    let eig = symmetrize(m).symmetric_eigen();
    eig.eigenvalues.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b))
}

/// Inverse of a symmetric positive definite matrix, `None` if Cholesky fails.
pub fn spd_inverse(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    nalgebra::Cholesky::new(symmetrize(m)).map(|c| c.inverse())
}

/// Factors of a (possibly singular) covariance block derived from one
/// symmetric eigendecomposition.
#[derive(Debug, Clone)]
pub struct CovarianceFactors {
    /// Moore-Penrose pseudoinverse.
    pub pinv: DMatrix<f64>,
    /// Symmetric square root of the pseudoinverse (the whitening weight).
    pub sqrt_pinv: DMatrix<f64>,
    /// Orthogonal projector onto the null space, `I - S S^+`.
    pub perp: DMatrix<f64>,
    /// Orthonormal basis of the null space, one column per null direction.
    pub null_basis: DMatrix<f64>,
    /// Thin factor `L` (dim x rank) with `L L^T = S`.
    pub range_factor: DMatrix<f64>,
    pub rank: usize,
}

impl CovarianceFactors {
    pub fn new(cov: &DMatrix<f64>) -> Self {
        let n = cov.nrows();
        if n == 0 {
            return Self {
                pinv: DMatrix::zeros(0, 0),
                sqrt_pinv: DMatrix::zeros(0, 0),
                perp: DMatrix::zeros(0, 0),
                null_basis: DMatrix::zeros(0, 0),
                range_factor: DMatrix::zeros(0, 0),
                rank: 0,
            };
        }
        let eig = symmetrize(cov).symmetric_eigen();
        let lmax = eig.eigenvalues.iter().fold(0.0f64, |a, &b| a.max(b));
        let cutoff = PINV_RCOND * lmax;
        let mut pinv = DMatrix::zeros(n, n);
        let mut sqrt_pinv = DMatrix::zeros(n, n);
        let mut range_cols: Vec<DVector<f64>> = Vec::new();
        let mut null_cols: Vec<DVector<f64>> = Vec::new();
        for (i, &lambda) in eig.eigenvalues.iter().enumerate() {
            let u = eig.eigenvectors.column(i).into_owned();
            if lmax > 0.0 && lambda > cutoff {
                let uut = &u * u.transpose();
                pinv += &uut / lambda;
                sqrt_pinv += &uut / sqrt(lambda);
                range_cols.push(u * sqrt(lambda));
            } else {
                null_cols.push(u);
            }
        }
        let rank = range_cols.len();
        let mut null_basis = DMatrix::zeros(n, null_cols.len());
        for (j, c) in null_cols.iter().enumerate() {
            null_basis.set_column(j, c);
        }
        let mut range_factor = DMatrix::zeros(n, rank);
        for (j, c) in range_cols.iter().enumerate() {
            range_factor.set_column(j, c);
        }
        let perp = &null_basis * null_basis.transpose();
        Self {
            pinv,
            sqrt_pinv,
            perp,
            null_basis,
            range_factor,
            rank,
        }
    }

    pub fn is_singular(&self) -> bool {
        self.rank < self.pinv.nrows()
    }
}

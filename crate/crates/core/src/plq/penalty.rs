use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use super::PlqError;
use crate::linalg;

/// Piecewise linear-quadratic penalty
/// `rho(x) = sup_{v in V} <v, b + B x> - v^T M v / 2`, `V = {v : H^T v <= h}`.
#[derive(Debug, Clone, PartialEq)]
pub struct PlqPenalty {
    pub b: DVector<f64>,
    pub bmat: DMatrix<f64>,
    pub m: DMatrix<f64>,
    pub hmat: DMatrix<f64>,
    pub h: DVector<f64>,
}

impl PlqPenalty {
    /// Validated constructor: `B` injective, `M` symmetric PSD, `h >= 0`.
    pub fn new(
        b: DVector<f64>,
        bmat: DMatrix<f64>,
        m: DMatrix<f64>,
        hmat: DMatrix<f64>,
        h: DVector<f64>,
    ) -> Result<Self, PlqError> {
        let p = Self::new_unchecked(b, bmat, m, hmat, h);
        p.validate()?;
        Ok(p)
    }

    pub(crate) fn new_unchecked(
        b: DVector<f64>,
        bmat: DMatrix<f64>,
        m: DMatrix<f64>,
        hmat: DMatrix<f64>,
        h: DVector<f64>,
    ) -> Self {
        Self { b, bmat, m, hmat, h }
    }

    /// Dual dimension `k`.
    pub fn dual_dim(&self) -> usize {
        self.b.len()
    }

    /// Primal dimension `n`.
    pub fn primal_dim(&self) -> usize {
        self.bmat.ncols()
    }

    /// Number of rows `l` describing `V`.
    pub fn constraint_count(&self) -> usize {
        self.h.len()
    }

    pub fn validate(&self) -> Result<(), PlqError> {
        let k = self.b.len();
        let l = self.h.len();
        if self.bmat.nrows() != k
            || self.m.nrows() != k
            || self.m.ncols() != k
            || self.hmat.nrows() != k
            || self.hmat.ncols() != l
        {
            return Err(PlqError::DimensionMismatch);
        }
        let svd = self.bmat.clone().svd(false, false);
        let smax = svd.singular_values.iter().fold(0.0f64, |a, &b| a.max(b));
        let smin = svd.singular_values.iter().fold(f64::INFINITY, |a, &b| a.min(b));
        if self.bmat.ncols() > k || smax == 0.0 || smin <= 1e-10 * smax {
            return Err(PlqError::NotInjective);
        }
        if self.h.iter().any(|&v| v < 0.0) {
            return Err(PlqError::OriginOutsideDualSet);
        }
        if !linalg::is_symmetric(&self.m, 1e-12) || linalg::min_eigenvalue(&self.m) < -1e-12 * linalg::max_abs(&self.m) {
            return Err(PlqError::NotPsd);
        }
        Ok(())
    }

    /// The penalty `gamma * rho`, expressed with dual variable `gamma v`:
    /// `M -> M / gamma`, `h -> gamma h`.
    pub fn scaled(&self, gamma: f64) -> Self {
        Self {
            b: self.b.clone(),
            bmat: self.bmat.clone(),
            m: &self.m / gamma,
            hmat: self.hmat.clone(),
            h: &self.h * gamma,
        }
    }

    /// `copies` independent copies acting on consecutive coordinates.
    pub fn replicate(&self, copies: usize) -> Self {
        let (k, n, l) = (self.dual_dim(), self.primal_dim(), self.constraint_count());
        let mut out = Self {
            b: DVector::zeros(k * copies),
            bmat: DMatrix::zeros(k * copies, n * copies),
            m: DMatrix::zeros(k * copies, k * copies),
            hmat: DMatrix::zeros(k * copies, l * copies),
            h: DVector::zeros(l * copies),
        };
        for c in 0..copies {
            out.b.rows_mut(c * k, k).copy_from(&self.b);
            out.bmat.view_mut((c * k, c * n), (k, n)).copy_from(&self.bmat);
            out.m.view_mut((c * k, c * k), (k, k)).copy_from(&self.m);
            out.hmat.view_mut((c * k, c * l), (k, l)).copy_from(&self.hmat);
            out.h.rows_mut(c * l, l).copy_from(&self.h);
        }
        out
    }

    /// `x -> rho(offset + map x)`.
    pub fn compose(&self, map: &DMatrix<f64>, offset: &DVector<f64>) -> Self {
        Self {
            b: &self.b + &self.bmat * offset,
            bmat: &self.bmat * map,
            m: self.m.clone(),
            hmat: self.hmat.clone(),
            h: self.h.clone(),
        }
    }

    pub fn contains_dual(&self, v: &DVector<f64>, tol: f64) -> bool {
        let lhs = self.hmat.transpose() * v;
        lhs.iter().zip(self.h.iter()).all(|(a, b)| *a <= b + tol)
    }

    /// Evaluates `rho(x)` by maximizing the concave dual quadratic over `V`.
    ///
    /// Every subset of rows of `H` is tried as an active set and the best
    /// KKT point kept, so cost is exponential in `l`. Intended for checking
    /// small encodings, not for solver inner loops. Returns `+inf` when the
    /// supremum is unbounded.
    pub fn eval(&self, x: &DVector<f64>) -> f64 {
        let q = &self.b + &self.bmat * x;
        let k = self.dual_dim();
        let l = self.constraint_count();
        assert!(l <= 20, "active-set enumeration is limited to small encodings");
        let tol = 1e-9 * (1.0 + q.amax() + self.h.amax());
        let mut best = f64::NEG_INFINITY;
        for mask in 0u32..(1u32 << l) {
            let active: Vec<usize> = (0..l).filter(|j| mask & (1 << j) != 0).collect();
            if active.len() > k {
                continue;
            }
            let a = active.len();
            let mut kkt = DMatrix::zeros(k + a, k + a);
            kkt.view_mut((0, 0), (k, k)).copy_from(&self.m);
            let mut rhs = DVector::zeros(k + a);
            rhs.rows_mut(0, k).copy_from(&q);
            for (i, &j) in active.iter().enumerate() {
                let col = self.hmat.column(j);
                kkt.view_mut((0, k + i), (k, 1)).copy_from(&col);
                kkt.view_mut((k + i, 0), (1, k)).copy_from(&col.transpose());
                rhs[k + i] = self.h[j];
            }
            let svd = kkt.clone().svd(true, true);
            let Ok(sol) = svd.solve(&rhs, 1e-12 * (1.0 + linalg::max_abs(&kkt))) else {
                continue;
            };
            if (&kkt * &sol - &rhs).amax() > tol {
                continue;
            }
            let v = sol.rows(0, k).into_owned();
            if sol.rows(k, a).iter().any(|&lam| lam < -tol) || !self.contains_dual(&v, tol) {
                continue;
            }
            let value = q.dot(&v) - 0.5 * v.dot(&(&self.m * &v));
            best = best.max(value);
        }
        if best == f64::NEG_INFINITY {
            f64::INFINITY
        } else {
            best
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plq::ScalarLoss;

    #[test]
    fn validation_rejects_bad_encodings() {
        let ok = ScalarLoss::Huber { kappa: 1.0 }.plq_encoding().unwrap();
        assert!(ok.validate().is_ok());
        let mut bad = ok.clone();
        bad.h[0] = -1.0;
        assert_eq!(bad.validate(), Err(PlqError::OriginOutsideDualSet));
        let mut bad = ok.clone();
        bad.bmat[(0, 0)] = 0.0;
        assert_eq!(bad.validate(), Err(PlqError::NotInjective));
        let mut bad = ok;
        bad.m[(0, 0)] = -1.0;
        assert_eq!(bad.validate(), Err(PlqError::NotPsd));
    }

    #[test]
    fn unbounded_sup_is_infinite() {
        // sup over v >= 0 of v x is +inf for x > 0.
        let p = PlqPenalty::new(
            DVector::zeros(1),
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::zeros(1, 1),
            DMatrix::from_element(1, 1, -1.0),
            DVector::zeros(1),
        )
        .unwrap();
        assert_eq!(p.eval(&DVector::from_element(1, 1.0)), f64::INFINITY);
        assert!(p.eval(&DVector::from_element(1, -1.0)).abs() < 1e-12);
    }

    #[test]
    fn scaling_multiplies_value() {
        let p = ScalarLoss::Huber { kappa: 0.7 }.plq_encoding().unwrap();
        for x in [-3.0, -0.2, 0.0, 0.5, 4.0] {
            let xv = DVector::from_element(1, x);
            assert!((p.scaled(2.5).eval(&xv) - 2.5 * p.eval(&xv)).abs() < 1e-10);
        }
    }
}

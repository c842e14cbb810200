use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use super::PlqError;

/// Convex feasible set for the stacked state.
#[derive(Debug, Clone, PartialEq)]
pub enum ConstraintSet {
    Unconstrained,
    /// Per-coordinate bounds; infinite entries leave a side open.
    Box { lo: DVector<f64>, hi: DVector<f64> },
    /// `||x||_2 <= tau`.
    Ball2 { tau: f64 },
    /// `||x||_1 <= tau`.
    Ball1 { tau: f64 },
    /// `||x||_inf <= tau`.
    BallInf { tau: f64 },
    /// `D^T x <= d`, plus optional equalities `E^T x = e`.
    Polyhedral {
        dmat: DMatrix<f64>,
        d: DVector<f64>,
        equality: Option<(DMatrix<f64>, DVector<f64>)>,
    },
}

impl ConstraintSet {
    pub fn validate(&self, dim: usize) -> Result<(), PlqError> {
        match self {
            ConstraintSet::Unconstrained => Ok(()),
            ConstraintSet::Box { lo, hi } => {
                if lo.len() != dim || hi.len() != dim {
                    return Err(PlqError::DimensionMismatch);
                }
                if lo.iter().zip(hi.iter()).any(|(l, h)| l > h || l.is_nan() || h.is_nan()) {
                    return Err(PlqError::EmptySet);
                }
                Ok(())
            }
            ConstraintSet::Ball2 { tau } | ConstraintSet::Ball1 { tau } | ConstraintSet::BallInf { tau } => {
                if *tau >= 0.0 && tau.is_finite() {
                    Ok(())
                } else {
                    Err(PlqError::EmptySet)
                }
            }
            ConstraintSet::Polyhedral { dmat, d, equality } => {
                if dmat.nrows() != dim || dmat.ncols() != d.len() {
                    return Err(PlqError::DimensionMismatch);
                }
                if dmat.iter().chain(d.iter()).any(|v| !v.is_finite()) {
                    return Err(PlqError::InvalidParameter("non-finite polyhedral row".into()));
                }
                if let Some((e, rhs)) = equality {
                    if e.nrows() != dim || e.ncols() != rhs.len() {
                        return Err(PlqError::DimensionMismatch);
                    }
                }
                Ok(())
            }
        }
    }

    pub fn is_unconstrained(&self) -> bool {
        matches!(self, ConstraintSet::Unconstrained)
    }

    pub fn contains(&self, x: &DVector<f64>, tol: f64) -> bool {
        match self {
            ConstraintSet::Unconstrained => true,
            ConstraintSet::Box { lo, hi } => x
                .iter()
                .zip(lo.iter().zip(hi.iter()))
                .all(|(v, (l, h))| *v >= l - tol && *v <= h + tol),
            ConstraintSet::Ball2 { tau } => x.norm() <= tau + tol,
            ConstraintSet::Ball1 { tau } => x.lp_norm(1) <= tau + tol,
            ConstraintSet::BallInf { tau } => x.amax() <= tau + tol,
            ConstraintSet::Polyhedral { dmat, d, equality } => {
                let ineq = (dmat.transpose() * x - d).iter().all(|v| *v <= tol);
                let eq = equality
                    .as_ref()
                    .map(|(e, rhs)| (e.transpose() * x - rhs).amax() <= tol)
                    .unwrap_or(true);
                ineq && eq
            }
        }
    }

    /// Euclidean projection. General polyhedra have no closed form and are
    /// left to the interior-point solver.
    pub fn project(&self, y: &DVector<f64>) -> Result<DVector<f64>, PlqError> {
        Ok(match self {
            ConstraintSet::Unconstrained => y.clone(),
            ConstraintSet::Box { lo, hi } => {
                DVector::from_fn(y.len(), |i, _| y[i].max(lo[i]).min(hi[i]))
            }
            ConstraintSet::Ball2 { tau } => {
                let norm = y.norm();
                if norm <= *tau {
                    y.clone()
                } else {
                    y * (tau / norm)
                }
            }
            ConstraintSet::Ball1 { tau } => project_l1_ball(y, *tau),
            ConstraintSet::BallInf { tau } => y.map(|v| v.clamp(-tau, *tau)),
            ConstraintSet::Polyhedral { .. } => return Err(PlqError::NotImplemented),
        })
    }
}

/// Sort-and-threshold projection onto `{x : ||x||_1 <= tau}`.
fn project_l1_ball(y: &DVector<f64>, tau: f64) -> DVector<f64> {
    if y.lp_norm(1) <= tau {
        return y.clone();
    }
    if tau == 0.0 {
        return DVector::zeros(y.len());
    }
    let mut u: Vec<f64> = y.iter().map(|v| crate::linalg::abs(*v)).collect();
    u.sort_unstable_by(|a, b| b.partial_cmp(a).unwrap_or(core::cmp::Ordering::Equal));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (j, &uj) in u.iter().enumerate() {
        cumsum += uj;
        let candidate = (cumsum - tau) / (j + 1) as f64;
        if uj - candidate > 0.0 {
            theta = candidate;
        } else {
            break;
        }
    }
    y.map(|v| {
        let shrunk = (crate::linalg::abs(v) - theta).max(0.0);
        if v < 0.0 {
            -shrunk
        } else {
            shrunk
        }
    })
}

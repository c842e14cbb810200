//! First-order solvers for
//!
//! ```text
//! min_x  V(W_R (y - Cx)) + gamma J(W_Q (z - Ax)),   x in X
//! ```
//!
//! where `W_R`, `W_Q` are the symmetric square roots of the (pseudo)inverse
//! covariance blocks. Quadratic losses carry a factor 1/2, so the pure
//! least-squares objective is half the stacked sum of squares; minimizers
//! are unaffected.

use alloc::string::String;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::blocktridiag::{self, BlockTridiag, BtdError};
use crate::linalg::CovarianceFactors;
use crate::plq::{ConstraintSet, PlqError, ScalarLoss};
use crate::statespace::{BlockRows, StackedSystem};

mod admm;
mod cp;
mod proxgrad;
mod subgradient;

pub use admm::{solve_admm_general, solve_admm_l1, AdmmOptions, AdmmOutcome, AdmmSplitting};
pub use cp::{solve_cp, CpOptions, CpVariant};
pub use proxgrad::{fista_momentum, solve_fista, solve_prox_grad, FistaOptions, ProxGradOptions};
pub use subgradient::{solve_subgradient, StepRule, SubgradientOptions};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolverError {
    #[error("gradient requested for nonsmooth loss {0}")]
    NonSmoothLoss(ScalarLoss),
    #[error("singular covariance blocks need equality constraints; use the interior-point solver")]
    SingularCovariance,
    #[error("step sizes violate sigma * tau * L^2 < 1 (product {product})")]
    StepSizeViolation { product: f64 },
    #[error("unsupported problem: {0}")]
    Unsupported(String),
    #[error("invalid problem: {0}")]
    InvalidProblem(String),
    #[error(transparent)]
    Btd(#[from] BtdError),
    #[error(transparent)]
    Plq(#[from] PlqError),
}

/// Smoothing objective with its losses, regularization weight and feasible set.
#[derive(Debug, Clone)]
pub struct SmootherProblem {
    sys: StackedSystem,
    measurement_loss: ScalarLoss,
    process_loss: ScalarLoss,
    gamma: f64,
    constraints: ConstraintSet,
    /// `(Pi, Q_0, ...)` factors.
    q_factors: Vec<CovarianceFactors>,
    /// `(R_1, ...)` factors; dropped measurements have zero weight.
    r_factors: Vec<CovarianceFactors>,
    equality_rows: Vec<BlockRows>,
}

impl SmootherProblem {
    pub fn new(
        sys: StackedSystem,
        measurement_loss: ScalarLoss,
        process_loss: ScalarLoss,
        gamma: f64,
        constraints: ConstraintSet,
    ) -> Result<Self, SolverError> {
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(SolverError::InvalidProblem(alloc::format!("gamma must be positive, got {gamma}")));
        }
        measurement_loss.validate()?;
        process_loss.validate()?;
        constraints.validate(sys.dim())?;
        let weights = sys.pseudo_weights();
        Ok(Self {
            sys,
            measurement_loss,
            process_loss,
            gamma,
            constraints,
            q_factors: weights.q,
            r_factors: weights.r,
            equality_rows: weights.equality_rows,
        })
    }

    /// Zeroes the weight of every measurement block `t` (0-based, i.e. `y_{t+1}`)
    /// with `keep[t] == false`. Used to hold out data for cross-validation.
    pub fn with_measurement_mask(mut self, keep: &[bool]) -> Self {
        let m = self.sys.meas_dim();
        for (t, &k) in keep.iter().enumerate() {
            if !k {
                let f = &mut self.r_factors[t];
                f.pinv = DMatrix::zeros(m, m);
                f.sqrt_pinv = DMatrix::zeros(m, m);
            }
        }
        // Null-space rows of a held-out measurement go with it. Measurement rows
        // are the only single-block rows past block 0.
        self.equality_rows.retain(|rows| {
            rows.next.is_some() || rows.block == 0 || keep.get(rows.block - 1).copied().unwrap_or(true)
        });
        self
    }

    pub fn with_gamma(mut self, gamma: f64) -> Self {
        self.gamma = gamma;
        self
    }

    pub fn with_constraints(mut self, constraints: ConstraintSet) -> Self {
        self.constraints = constraints;
        self
    }

    pub fn sys(&self) -> &StackedSystem {
        &self.sys
    }

    pub fn measurement_loss(&self) -> ScalarLoss {
        self.measurement_loss
    }

    pub fn process_loss(&self) -> ScalarLoss {
        self.process_loss
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn constraints(&self) -> &ConstraintSet {
        &self.constraints
    }

    pub fn q_factors(&self) -> &[CovarianceFactors] {
        &self.q_factors
    }

    pub fn r_factors(&self) -> &[CovarianceFactors] {
        &self.r_factors
    }

    /// Null-space rows pinning the state where covariance blocks are singular.
    pub fn equality_rows(&self) -> &[BlockRows] {
        &self.equality_rows
    }

    pub fn dim(&self) -> usize {
        self.sys.dim()
    }

    pub(crate) fn require_regular(&self) -> Result<(), SolverError> {
        if self.equality_rows.is_empty() {
            Ok(())
        } else {
            Err(SolverError::SingularCovariance)
        }
    }

    fn q_weights(&self) -> Vec<DMatrix<f64>> {
        self.q_factors.iter().map(|f| f.pinv.clone()).collect()
    }

    fn r_weights(&self) -> Vec<DMatrix<f64>> {
        self.r_factors.iter().map(|f| f.pinv.clone()).collect()
    }

    /// `W_R (y - C x)`, one block per measurement.
    pub fn measurement_residual(&self, x: &DVector<f64>) -> DVector<f64> {
        let raw = &self.sys.y - self.sys.c_mul(x);
        apply_blocks(&self.r_factors, &raw, self.sys.meas_dim())
    }

    /// `W_Q (z - A x)`, prior block first.
    pub fn process_residual(&self, x: &DVector<f64>) -> DVector<f64> {
        let raw = &self.sys.z - self.sys.a_mul(x);
        apply_blocks(&self.q_factors, &raw, self.sys.state_dim())
    }

    /// `W_R y`.
    pub(crate) fn weighted_y(&self) -> DVector<f64> {
        apply_blocks(&self.r_factors, &self.sys.y, self.sys.meas_dim())
    }

    /// `W_Q z`.
    pub(crate) fn weighted_z(&self) -> DVector<f64> {
        apply_blocks(&self.q_factors, &self.sys.z, self.sys.state_dim())
    }

    /// `W_R C x`.
    pub(crate) fn k_meas(&self, x: &DVector<f64>) -> DVector<f64> {
        apply_blocks(&self.r_factors, &self.sys.c_mul(x), self.sys.meas_dim())
    }

    /// `C^T W_R w`.
    pub(crate) fn k_meas_t(&self, w: &DVector<f64>) -> DVector<f64> {
        self.sys.ct_mul(&apply_blocks(&self.r_factors, w, self.sys.meas_dim()))
    }

    /// `W_Q A x`.
    pub(crate) fn k_proc(&self, x: &DVector<f64>) -> DVector<f64> {
        apply_blocks(&self.q_factors, &self.sys.a_mul(x), self.sys.state_dim())
    }

    /// `A^T W_Q w`.
    pub(crate) fn k_proc_t(&self, w: &DVector<f64>) -> DVector<f64> {
        self.sys.at_mul(&apply_blocks(&self.q_factors, w, self.sys.state_dim()))
    }

    /// Objective value, ignoring the constraint set.
    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        let meas = blockwise_loss(self.measurement_loss, &self.measurement_residual(x), self.sys.meas_dim());
        let proc = blockwise_loss(self.process_loss, &self.process_residual(x), self.sys.state_dim());
        meas + self.gamma * proc
    }

    /// Gradient of the objective when both losses are differentiable.
    pub fn grad_smooth(&self, x: &DVector<f64>) -> Result<DVector<f64>, SolverError> {
        for loss in [self.measurement_loss, self.process_loss] {
            if !loss.is_smooth() {
                return Err(SolverError::NonSmoothLoss(loss));
            }
        }
        let dv = self.measurement_residual(x).map(|r| self.measurement_loss.gradient(r).unwrap_or(0.0));
        let dj = self.process_residual(x).map(|r| self.process_loss.gradient(r).unwrap_or(0.0));
        Ok(-(self.k_meas_t(&dv) + self.k_proc_t(&dj) * self.gamma))
    }

    /// One subgradient of the objective (zero tie-breaks per loss).
    pub fn subgradient(&self, x: &DVector<f64>) -> DVector<f64> {
        let dv = blockwise_subgradient(self.measurement_loss, &self.measurement_residual(x), self.sys.meas_dim());
        let dj = blockwise_subgradient(self.process_loss, &self.process_residual(x), self.sys.state_dim());
        -(self.k_meas_t(&dv) + self.k_proc_t(&dj) * self.gamma)
    }

    /// `c_V C^T W_R^2 C + gamma c_J A^T W_Q^2 A` where `c` is each loss's curvature.
    pub fn hessian_bound_operator(&self) -> BlockTridiag {
        let cv = self.measurement_loss.curvature();
        let cj = self.process_loss.curvature();
        let (op, _) =
            blocktridiag::assemble_parts(&self.sys, &self.q_weights(), &self.r_weights(), self.gamma * cj, cv);
        op
    }

    /// Lipschitz constant of the smooth gradient: a power-iteration estimate
    /// inflated by 5%, capped by the Gershgorin bound.
    pub fn lipschitz_bound(&self) -> f64 {
        operator_norm_sq_bound(&self.hessian_bound_operator())
    }

    /// Operators `C^T W_R^2 C` and `A^T W_Q^2 A`.
    pub(crate) fn grams(&self) -> (BlockTridiag, BlockTridiag) {
        (
            blocktridiag::measurement_gram(&self.sys, &self.r_weights()),
            blocktridiag::process_gram(&self.sys, &self.q_weights()),
        )
    }

    /// Projection onto the constraint set, or an error for general polyhedra.
    pub fn project(&self, x: &DVector<f64>) -> Result<DVector<f64>, SolverError> {
        Ok(self.constraints.project(x)?)
    }
}

/// Upper bound on the largest eigenvalue of a PSD block-tridiagonal operator.
pub fn operator_norm_sq_bound(op: &BlockTridiag) -> f64 {
    let est = blocktridiag::power_iteration(|v| op.apply(v), op.dim(), 1000, 1e-10);
    est.inflated().min(op.gershgorin_bound()).max(est.value)
}

pub(crate) fn apply_blocks(factors: &[CovarianceFactors], v: &DVector<f64>, dim: usize) -> DVector<f64> {
    let mut out = DVector::zeros(v.len());
    for (j, f) in factors.iter().enumerate() {
        out.rows_mut(j * dim, dim).copy_from(&(&f.sqrt_pinv * v.rows(j * dim, dim)));
    }
    out
}

pub(crate) fn blockwise_loss(loss: ScalarLoss, v: &DVector<f64>, dim: usize) -> f64 {
    if loss.is_separable() {
        v.iter().map(|x| loss.eval(*x)).sum()
    } else {
        (0..v.len() / dim.max(1)).map(|j| v.rows(j * dim, dim).norm()).sum()
    }
}

pub(crate) fn blockwise_subgradient(loss: ScalarLoss, v: &DVector<f64>, dim: usize) -> DVector<f64> {
    if loss.is_separable() {
        v.map(|x| loss.subgradient(x))
    } else {
        let mut out = DVector::zeros(v.len());
        for j in 0..v.len() / dim.max(1) {
            let blk = v.rows(j * dim, dim).into_owned();
            out.rows_mut(j * dim, dim).copy_from(&loss.subgradient_block(&blk));
        }
        out
    }
}

/// Block-wise `prox_{eta loss}`.
pub(crate) fn blockwise_prox(loss: ScalarLoss, eta: f64, v: &DVector<f64>, dim: usize) -> DVector<f64> {
    if loss.is_separable() {
        v.map(|x| loss.prox_scalar(eta, x))
    } else {
        let mut out = DVector::zeros(v.len());
        for j in 0..v.len() / dim.max(1) {
            let blk = v.rows(j * dim, dim).into_owned();
            out.rows_mut(j * dim, dim).copy_from(&loss.prox(eta, &blk));
        }
        out
    }
}

/// `prox_{sigma (weight * loss)^*}(p) = p - sigma prox_{(weight/sigma) loss}(p / sigma)`.
pub(crate) fn blockwise_prox_conjugate(
    loss: ScalarLoss,
    weight: f64,
    sigma: f64,
    p: &DVector<f64>,
    dim: usize,
) -> DVector<f64> {
    match loss {
        // The conjugate of a weighted norm is the indicator of a scaled dual ball.
        ScalarLoss::L1 => p.map(|v| v.clamp(-weight, weight)),
        ScalarLoss::GroupL2 => {
            let mut out = p.clone();
            for j in 0..p.len() / dim.max(1) {
                let norm = p.rows(j * dim, dim).norm();
                if norm > weight {
                    let mut blk = out.rows_mut(j * dim, dim);
                    blk *= weight / norm;
                }
            }
            out
        }
        _ => p - blockwise_prox(loss, weight / sigma, &(p / sigma), dim) * sigma,
    }
}

/// Why a solver stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    Converged,
    MaxIterations,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    pub objective: f64,
    pub step: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverReport {
    pub x: DVector<f64>,
    pub records: Vec<IterationRecord>,
    pub termination: Termination,
    pub iterations: usize,
}

impl SolverReport {
    pub fn final_objective(&self) -> Option<f64> {
        self.records.last().map(|r| r.objective)
    }

    /// Running minimum of the recorded objective values.
    pub fn best_objectives(&self) -> Vec<f64> {
        let mut best = f64::INFINITY;
        self.records
            .iter()
            .map(|r| {
                best = best.min(r.objective);
                best
            })
            .collect()
    }
}

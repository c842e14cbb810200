use alloc::vec::Vec;

use nalgebra::DVector;

use super::{
    blockwise_prox_conjugate, operator_norm_sq_bound, IterationRecord, SmootherProblem, SolverError, SolverReport,
    Termination,
};
use crate::blocktridiag;
use crate::clock::Stopwatch;
use crate::plq::ScalarLoss;

/// How the objective is split between `f(Kx)` and `g(x)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CpVariant {
    /// `K = [W_R C; W_Q A]`, `f` holds both losses, `g` is the constraint indicator.
    V1,
    /// `K = [W_R C; I]`, `f` holds the measurement loss and the constraint
    /// indicator, `g` is the quadratic process term (prox by a factored solve).
    V2,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CpOptions {
    pub variant: CpVariant,
    /// Dual step; `0.99 / L` when `None`.
    pub sigma: Option<f64>,
    /// Primal step; `0.99 / L` when `None`.
    pub tau: Option<f64>,
    pub eps: f64,
    pub max_iters: usize,
}

impl CpOptions {
    pub fn new(variant: CpVariant) -> Self {
        Self { variant, sigma: None, tau: None, eps: 1e-10, max_iters: 10_000 }
    }
}

/// Chambolle-Pock primal-dual iteration from `x = 0`, `omega = 0`.
///
/// The objective recorded per iteration (and the returned `x`) is taken at
/// the projection of the primal iterate onto the constraint set, since V2
/// enforces the constraints only through the dual.
pub fn solve_cp(p: &SmootherProblem, opts: &CpOptions) -> Result<SolverReport, SolverError> {
    p.require_regular()?;
    let dim = p.dim();
    let nm = p.sys().meas_dim() * p.sys().horizon();
    let n = p.sys().state_dim();
    let m = p.sys().meas_dim();
    let (meas, proc) = p.grams();
    let l_sq = match opts.variant {
        CpVariant::V1 => operator_norm_sq_bound(&proc.add(&meas)),
        CpVariant::V2 => {
            if p.process_loss() != ScalarLoss::Quadratic {
                return Err(SolverError::Unsupported("CP-V2 needs a quadratic process loss".into()));
            }
            operator_norm_sq_bound(&meas.shifted(1.0))
        }
    };
    let l = crate::linalg::sqrt(l_sq);
    let sigma = opts.sigma.unwrap_or(0.99 / l);
    let tau = opts.tau.unwrap_or(0.99 / l);
    let product = sigma * tau * l_sq;
    if !(product < 1.0) {
        return Err(SolverError::StepSizeViolation { product });
    }
    // Make sure projection is available before iterating.
    p.project(&DVector::zeros(dim))?;

    let wy = p.weighted_y();
    let wz = p.weighted_z();
    let gamma = p.gamma();
    let v_loss = p.measurement_loss();
    let j_loss = p.process_loss();
    let v2_factor = match opts.variant {
        CpVariant::V2 => Some(blocktridiag::factor(&proc.scaled(tau * gamma).shifted(1.0))?),
        CpVariant::V1 => None,
    };
    let v2_rhs = p.k_proc_t(&wz) * (tau * gamma);

    let clock = Stopwatch::start();
    let dual_dim = nm + dim;
    let mut x = DVector::zeros(dim);
    let mut x_prev = x.clone();
    let mut omega = DVector::zeros(dual_dim);
    let mut records = Vec::new();
    let mut termination = Termination::MaxIterations;
    let mut iterations = 0;
    for k in 1..=opts.max_iters {
        let xbar = &x * 2.0 - &x_prev;
        let mut p_meas = omega.rows(0, nm) + (p.k_meas(&xbar) - &wy) * sigma;
        let omega_next = match opts.variant {
            CpVariant::V1 => {
                let p_proc = omega.rows(nm, dim) + (p.k_proc(&xbar) - &wz) * sigma;
                let mut next = DVector::zeros(dual_dim);
                next.rows_mut(0, nm).copy_from(&blockwise_prox_conjugate(v_loss, 1.0, sigma, &p_meas, m));
                next.rows_mut(nm, dim)
                    .copy_from(&blockwise_prox_conjugate(j_loss, gamma, sigma, &p_proc, n));
                next
            }
            CpVariant::V2 => {
                let p_box = omega.rows(nm, dim) + &xbar * sigma;
                let mut next = DVector::zeros(dual_dim);
                p_meas = blockwise_prox_conjugate(v_loss, 1.0, sigma, &p_meas, m);
                next.rows_mut(0, nm).copy_from(&p_meas);
                let proj = p.project(&(&p_box / sigma))?;
                next.rows_mut(nm, dim).copy_from(&(&p_box - proj * sigma));
                next
            }
        };
        let kt_omega = match opts.variant {
            CpVariant::V1 => p.k_meas_t(&omega_next.rows(0, nm).into_owned()) + p.k_proc_t(&omega_next.rows(nm, dim).into_owned()),
            CpVariant::V2 => p.k_meas_t(&omega_next.rows(0, nm).into_owned()) + omega_next.rows(nm, dim),
        };
        let step = &x - kt_omega * tau;
        let x_next = match opts.variant {
            CpVariant::V1 => p.project(&step)?,
            CpVariant::V2 => v2_factor.as_ref().expect("factored for V2").solve(&(step + &v2_rhs)),
        };
        let change = (&omega_next - &omega).norm() + (&x_next - &x).norm();
        x_prev = core::mem::replace(&mut x, x_next);
        omega = omega_next;
        iterations = k;
        let feasible = p.project(&x)?;
        records.push(IterationRecord {
            iteration: k,
            objective: p.objective(&feasible),
            step: tau,
            primal_residual: (&x - &x_prev).norm(),
            dual_residual: change,
            seconds: clock.seconds(),
        });
        if change <= opts.eps {
            termination = Termination::Converged;
            break;
        }
    }
    let x = p.project(&x)?;
    Ok(SolverReport { x, records, termination, iterations })
}

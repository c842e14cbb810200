use alloc::vec::Vec;

use nalgebra::DVector;

use super::{IterationRecord, SmootherProblem, SolverError, SolverReport, Termination};
use crate::blocktridiag::{self, BtdFactorization};
use crate::clock::Stopwatch;
use crate::plq::ScalarLoss;

/// A problem `min f(x) + g(omega)` subject to `K1 x + K2 omega = c`, given
/// by its two partial minimizations.
pub trait AdmmSplitting {
    fn x_dim(&self) -> usize;
    fn omega_dim(&self) -> usize;
    fn c(&self) -> &DVector<f64>;
    fn k1(&self, x: &DVector<f64>) -> DVector<f64>;
    fn k2(&self, omega: &DVector<f64>) -> DVector<f64>;
    fn k1_t(&self, r: &DVector<f64>) -> DVector<f64>;
    /// `argmin_x f(x) + <u, K1 x> + tau/2 ||K1 x + K2 omega - c||^2`.
    fn x_update(&self, omega: &DVector<f64>, u: &DVector<f64>, tau: f64) -> DVector<f64>;
    /// `argmin_w g(w) + <u, K2 w> + tau/2 ||K1 x + K2 w - c||^2`.
    fn omega_update(&self, x: &DVector<f64>, u: &DVector<f64>, tau: f64) -> DVector<f64>;
    /// Value recorded per iteration.
    fn objective(&self, _x: &DVector<f64>, _omega: &DVector<f64>) -> f64 {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdmmOptions {
    pub tau: f64,
    pub eps: f64,
    pub max_iters: usize,
}

impl Default for AdmmOptions {
    fn default() -> Self {
        Self { tau: 1.0, eps: 1e-8, max_iters: 10_000 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdmmOutcome {
    pub report: SolverReport,
    pub omega: DVector<f64>,
    pub u: DVector<f64>,
}

/// Alternating minimization with a scaled dual ascent on `u`. Stops once both
/// the primal residual `||K1 x + K2 omega - c||` and the dual residual
/// `||tau K1^T K2 (omega_new - omega)||` are at most `eps`.
pub fn solve_admm_general<S: AdmmSplitting + ?Sized>(split: &S, opts: &AdmmOptions) -> AdmmOutcome {
    let clock = Stopwatch::start();
    let tau = opts.tau;
    let mut omega = DVector::zeros(split.omega_dim());
    let mut u = DVector::zeros(split.c().len());
    let mut x = DVector::zeros(split.x_dim());
    let mut records = Vec::new();
    let mut termination = Termination::MaxIterations;
    let mut iterations = 0;
    for k in 1..=opts.max_iters {
        x = split.x_update(&omega, &u, tau);
        let omega_next = split.omega_update(&x, &u, tau);
        let primal = split.k1(&x) + split.k2(&omega_next) - split.c();
        let dual = split.k1_t(&split.k2(&(&omega_next - &omega))) * tau;
        u += &primal * tau;
        omega = omega_next;
        let (rp, rd) = (primal.norm(), dual.norm());
        iterations = k;
        records.push(IterationRecord {
            iteration: k,
            objective: split.objective(&x, &omega),
            step: tau,
            primal_residual: rp,
            dual_residual: rd,
            seconds: clock.seconds(),
        });
        if rp <= opts.eps && rd <= opts.eps {
            termination = Termination::Converged;
            break;
        }
    }
    AdmmOutcome { report: SolverReport { x, records, termination, iterations }, omega, u }
}

/// The l1-Kalman splitting `min ||omega||_1 + gamma/2 ||W_Q (z - Ax)||^2`
/// subject to `omega + W_R C x = W_R y`.
struct L1KalmanSplit<'a> {
    p: &'a SmootherProblem,
    c: DVector<f64>,
    factor: BtdFactorization,
    /// `gamma A^T W_Q^2 z`.
    prior_rhs: DVector<f64>,
}

impl AdmmSplitting for L1KalmanSplit<'_> {
    fn x_dim(&self) -> usize {
        self.p.dim()
    }

    fn omega_dim(&self) -> usize {
        self.c.len()
    }

    fn c(&self) -> &DVector<f64> {
        &self.c
    }

    fn k1(&self, x: &DVector<f64>) -> DVector<f64> {
        self.p.k_meas(x)
    }

    fn k2(&self, omega: &DVector<f64>) -> DVector<f64> {
        omega.clone()
    }

    fn k1_t(&self, r: &DVector<f64>) -> DVector<f64> {
        self.p.k_meas_t(r)
    }

    fn x_update(&self, omega: &DVector<f64>, u: &DVector<f64>, tau: f64) -> DVector<f64> {
        // (gamma A^T W_Q^2 A + tau K1^T K1) x = gamma A^T W_Q^2 z - K1^T u - tau K1^T (omega - c)
        let rhs = &self.prior_rhs - self.p.k_meas_t(&(u + (omega - &self.c) * tau));
        self.factor.solve(&rhs)
    }

    fn omega_update(&self, x: &DVector<f64>, u: &DVector<f64>, tau: f64) -> DVector<f64> {
        let target = &self.c - self.p.k_meas(x) - u / tau;
        target.map(|v| ScalarLoss::L1.prox_scalar(1.0 / tau, v))
    }

    fn objective(&self, x: &DVector<f64>, _omega: &DVector<f64>) -> f64 {
        self.p.objective(x)
    }
}

/// ADMM for the l1 measurement loss with a quadratic process loss. The
/// x-update system is factored once.
pub fn solve_admm_l1(p: &SmootherProblem, opts: &AdmmOptions) -> Result<SolverReport, SolverError> {
    p.require_regular()?;
    if p.measurement_loss() != ScalarLoss::L1 || p.process_loss() != ScalarLoss::Quadratic {
        return Err(SolverError::Unsupported("ADMM needs an l1 measurement loss and a quadratic process loss".into()));
    }
    if !p.constraints().is_unconstrained() {
        return Err(SolverError::Unsupported("ADMM handles unconstrained problems only".into()));
    }
    let (meas, proc) = p.grams();
    let op = proc.scaled(p.gamma()).add(&meas.scaled(opts.tau));
    let factor = blocktridiag::factor(&op)?;
    let prior_rhs = p.k_proc_t(&p.weighted_z()) * p.gamma();
    let split = L1KalmanSplit { p, c: p.weighted_y(), factor, prior_rhs };
    Ok(solve_admm_general(&split, opts).report)
}

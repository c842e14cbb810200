use alloc::vec::Vec;

use nalgebra::DVector;

use super::{IterationRecord, SmootherProblem, SolverError, SolverReport, Termination};
use crate::clock::Stopwatch;
use crate::linalg::sqrt;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProxGradOptions {
    pub eps: f64,
    pub max_iters: usize,
    /// Step `1 / beta`; estimated from the problem when `None`.
    pub beta: Option<f64>,
}

impl Default for ProxGradOptions {
    fn default() -> Self {
        Self { eps: 1e-8, max_iters: 10_000, beta: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FistaOptions {
    pub eps: f64,
    pub max_iters: usize,
    pub beta: Option<f64>,
    /// Reset the momentum sequence every this many iterations.
    pub restart_every: Option<usize>,
}

impl Default for FistaOptions {
    fn default() -> Self {
        Self { eps: 1e-8, max_iters: 10_000, beta: None, restart_every: None }
    }
}

/// Next momentum parameter `(1 + sqrt(1 + 4 s^2)) / 2`.
pub fn fista_momentum(s: f64) -> f64 {
    0.5 * (1.0 + sqrt(1.0 + 4.0 * s * s))
}

fn smooth_precheck(p: &SmootherProblem) -> Result<(), SolverError> {
    p.require_regular()?;
    for loss in [p.measurement_loss(), p.process_loss()] {
        if !loss.is_smooth() {
            return Err(SolverError::NonSmoothLoss(loss));
        }
    }
    Ok(())
}

/// Projected gradient with step `1 / beta`. Stops when the fixed-point
/// residual `||x - proj(x - grad / beta)||` drops to `eps`.
pub fn solve_prox_grad(p: &SmootherProblem, opts: &ProxGradOptions) -> Result<SolverReport, SolverError> {
    smooth_precheck(p)?;
    let beta = opts.beta.unwrap_or_else(|| p.lipschitz_bound());
    let clock = Stopwatch::start();
    let mut x = DVector::zeros(p.dim());
    let mut records = Vec::new();
    let mut termination = Termination::MaxIterations;
    let mut iterations = 0;
    for k in 1..=opts.max_iters {
        let g = p.grad_smooth(&x)?;
        let next = p.project(&(&x - g / beta))?;
        let residual = (&next - &x).norm();
        x = next;
        iterations = k;
        records.push(IterationRecord {
            iteration: k,
            objective: p.objective(&x),
            step: 1.0 / beta,
            primal_residual: residual,
            dual_residual: 0.0,
            seconds: clock.seconds(),
        });
        if residual <= opts.eps {
            termination = Termination::Converged;
            break;
        }
    }
    Ok(SolverReport { x, records, termination, iterations })
}

/// Accelerated projected gradient. The output is the last prox point `x`,
/// which is always feasible.
pub fn solve_fista(p: &SmootherProblem, opts: &FistaOptions) -> Result<SolverReport, SolverError> {
    smooth_precheck(p)?;
    let beta = opts.beta.unwrap_or_else(|| p.lipschitz_bound());
    let clock = Stopwatch::start();
    let mut x = DVector::zeros(p.dim());
    let mut x_prev = x.clone();
    let mut s = 1.0;
    let mut s_prev = 1.0;
    let mut records = Vec::new();
    let mut termination = Termination::MaxIterations;
    let mut iterations = 0;
    let mut since_restart = 0;
    for k in 1..=opts.max_iters {
        let w = &x + (&x - &x_prev) * ((s_prev - 1.0) / s);
        let g = p.grad_smooth(&w)?;
        let next = p.project(&(&w - g / beta))?;
        let residual = (&next - &w).norm();
        x_prev = core::mem::replace(&mut x, next);
        since_restart += 1;
        if opts.restart_every.is_some_and(|every| since_restart >= every) {
            s_prev = 1.0;
            s = 1.0;
            since_restart = 0;
        } else {
            s_prev = s;
            s = fista_momentum(s);
        }
        iterations = k;
        records.push(IterationRecord {
            iteration: k,
            objective: p.objective(&x),
            step: 1.0 / beta,
            primal_residual: residual,
            dual_residual: 0.0,
            seconds: clock.seconds(),
        });
        if residual <= opts.eps {
            termination = Termination::Converged;
            break;
        }
    }
    Ok(SolverReport { x, records, termination, iterations })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn momentum_sequence_starts_at_golden_ratio() {
        assert!((fista_momentum(1.0) - (1.0 + sqrt(5.0)) / 2.0).abs() < 1e-15);
    }
}

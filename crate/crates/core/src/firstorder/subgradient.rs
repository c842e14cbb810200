use alloc::vec::Vec;

use nalgebra::DVector;

use super::{IterationRecord, SmootherProblem, SolverError, SolverReport, Termination};
use crate::clock::Stopwatch;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepRule {
    /// `scale / k` at iteration `k`.
    Harmonic { scale: f64 },
    /// A fixed step, e.g. `delta / (L sqrt(K))` for a known budget `K`.
    Constant(f64),
}

impl StepRule {
    pub fn step(&self, k: usize) -> f64 {
        match *self {
            StepRule::Harmonic { scale } => scale / k as f64,
            StepRule::Constant(a) => a,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubgradientOptions {
    pub max_iters: usize,
    pub step: StepRule,
}

impl Default for SubgradientOptions {
    fn default() -> Self {
        Self { max_iters: 10_000, step: StepRule::Harmonic { scale: 1.0 } }
    }
}

/// Projected subgradient descent from `x = 0`. The method is not a descent
/// method, so the report's `x` is the best iterate seen while each record
/// holds the objective of the current iterate.
pub fn solve_subgradient(p: &SmootherProblem, opts: &SubgradientOptions) -> Result<SolverReport, SolverError> {
    p.require_regular()?;
    let clock = Stopwatch::start();
    let mut x = p.project(&DVector::zeros(p.dim()))?;
    let mut best_x = x.clone();
    let mut best = p.objective(&x);
    let mut records = Vec::with_capacity(opts.max_iters);
    for k in 1..=opts.max_iters {
        let g = p.subgradient(&x);
        let alpha = opts.step.step(k);
        x = p.project(&(&x - &g * alpha))?;
        let f = p.objective(&x);
        if f < best {
            best = f;
            best_x.copy_from(&x);
        }
        records.push(IterationRecord {
            iteration: k,
            objective: f,
            step: alpha,
            primal_residual: g.norm(),
            dual_residual: 0.0,
            seconds: clock.seconds(),
        });
    }
    Ok(SolverReport { x: best_x, records, termination: Termination::MaxIterations, iterations: opts.max_iters })
}

use alloc::boxed::Box;
use alloc::format;
use alloc::vec::Vec;

use super::kkt::{add_rows_t, kkt_residual, KktState};
use super::newton::{newton_direction, step_to_boundary};
use super::{ConstrainedPlqProblem, IpError};
use crate::clock::Stopwatch;
use crate::firstorder::{IterationRecord, SolverReport, Termination};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IpOptions {
    /// Bound on both the average complementarity and `||F_0||_inf`.
    pub eps: f64,
    pub max_iters: usize,
    /// Centering factor: `mu = theta * (omega^T s + w^T r) / pairs`.
    pub theta: f64,
    /// Fraction-to-boundary factor.
    pub fraction: f64,
    /// Step halvings tried before a non-decreasing step is accepted anyway.
    pub max_backtracks: usize,
}

impl Default for IpOptions {
    fn default() -> Self {
        Self { eps: 1e-8, max_iters: 200, theta: 0.1, fraction: 0.995, max_backtracks: 30 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IpSolution {
    pub state: KktState,
    /// Per-iteration records: `objective` is `rho(x)`, `step` the accepted
    /// step length, `primal_residual` is `||F_0||_inf` and `dual_residual`
    /// the average complementarity.
    pub report: SolverReport,
    /// Iterations whose step was accepted without decreasing the merit.
    pub unproductive_steps: usize,
}

impl IpSolution {
    pub fn x(&self) -> &nalgebra::DVector<f64> {
        &self.report.x
    }
}

/// Damped Newton on `F_mu = 0` with `mu` driven to zero by the centering
/// factor. Each step is cut back to the fraction-to-boundary length and then
/// halved until `||F_mu||` decreases.
pub fn solve_ip(p: &ConstrainedPlqProblem, opts: &IpOptions) -> Result<IpSolution, IpError> {
    solve_ip_from(p, KktState::initial(p), opts)
}

pub fn solve_ip_from(p: &ConstrainedPlqProblem, start: KktState, opts: &IpOptions) -> Result<IpSolution, IpError> {
    solve_ip_observed(p, start, opts, |_, _| {})
}

/// As [`solve_ip_from`], calling `observe(k, state)` after every iteration.
pub fn solve_ip_observed<F>(
    p: &ConstrainedPlqProblem,
    start: KktState,
    opts: &IpOptions,
    mut observe: F,
) -> Result<IpSolution, IpError>
where
    F: FnMut(usize, &KktState),
{
    if !start.is_strictly_positive() {
        return Err(IpError::InvalidProblem("starting point must have positive slacks and multipliers".into()));
    }
    let clock = Stopwatch::start();
    let mut st = start;
    let mut records = Vec::new();
    let mut unproductive = 0;
    let score = |st: &KktState| kkt_residual(p, st, 0.0).norm_inf().max(st.average_complementarity());
    let mut best = (score(&st), st.clone(), 0usize);
    for k in 1..=opts.max_iters {
        let mu = opts.theta * st.average_complementarity();
        let d = newton_direction(p, &st, mu)?;
        let merit = kkt_residual(p, &st, mu).norm();
        let mut alpha = step_to_boundary(&st, &d, opts.fraction);
        let mut next = st.stepped(&d, alpha);
        let mut decreased = kkt_residual(p, &next, mu).norm() < merit;
        let mut halvings = 0;
        while !decreased && halvings < opts.max_backtracks {
            alpha *= 0.5;
            halvings += 1;
            next = st.stepped(&d, alpha);
            decreased = kkt_residual(p, &next, mu).norm() < merit;
        }
        if !decreased {
            unproductive += 1;
        }
        st = next;
        observe(k, &st);
        let res0 = kkt_residual(p, &st, 0.0).norm_inf();
        let gap = st.average_complementarity();
        records.push(IterationRecord {
            iteration: k,
            objective: p.objective(&st.x),
            step: alpha,
            primal_residual: res0,
            dual_residual: gap,
            seconds: clock.seconds(),
        });
        let s = res0.max(gap);
        if s < best.0 {
            best = (s, st.clone(), k);
        }
        if gap <= opts.eps && res0 <= opts.eps {
            let report = SolverReport { x: st.x.clone(), records, termination: Termination::Converged, iterations: k };
            return Ok(IpSolution { state: st, report, unproductive_steps: unproductive });
        }
    }
    let (_, state, _) = best;
    let report = SolverReport {
        x: state.x.clone(),
        records,
        termination: Termination::MaxIterations,
        iterations: opts.max_iters,
    };
    Err(IpError::MaxItersExceeded {
        iterations: opts.max_iters,
        best: Box::new(IpSolution { state, report, unproductive_steps: unproductive }),
    })
}

/// `rho(x) + <d, omega> + <e, lambda> + v^T M v / 2 - <b, v>`: the primal
/// value at `x` minus the dual value at `(v, omega, lambda)`.
///
/// The dual point must satisfy `H^T v <= h`, `omega >= 0` and
/// `B^T v + D omega + E lambda = 0` to within `tol` (scaled by the size of
/// the terms); otherwise the value is not a bound and an error is returned.
pub fn duality_gap(p: &ConstrainedPlqProblem, st: &KktState, tol: f64) -> Result<f64, IpError> {
    let n = p.state_dim();
    let lay = p.layout();
    let mut stationarity = nalgebra::DVector::zeros(p.dim());
    let mut scale: f64 = 1.0;
    let mut dual_value = 0.0;
    for (i, term) in p.terms().iter().enumerate() {
        let enc = &term.encoding;
        let v = st.v.rows(lay.v[i], enc.dual_dim());
        let slack = &enc.h - enc.hmat.transpose() * v;
        let hscale = enc.h.amax().max(v.amax()).max(1.0);
        if slack.iter().any(|s| *s < -tol * hscale) {
            return Err(IpError::DualInfeasible(format!("term {i} has v outside its dual set")));
        }
        let mut loc = stationarity.rows_mut(term.block * n, term.local_dim());
        loc.gemv_tr(1.0, &enc.bmat, &v, 1.0);
        scale = scale.max((enc.bmat.transpose() * v).amax());
        dual_value += enc.b.dot(&v) - 0.5 * v.dot(&(&enc.m * v));
    }
    if st.omega.iter().any(|w| *w < -tol) {
        return Err(IpError::DualInfeasible("negative inequality multiplier".into()));
    }
    for (g, rows) in p.inequalities().iter().enumerate() {
        let om = st.omega.rows(lay.s[g], rows.len()).into_owned();
        add_rows_t(&mut stationarity, rows, &om, n);
        dual_value -= rows.rhs.dot(&om);
    }
    for (g, rows) in p.equalities().iter().enumerate() {
        let lam = st.lambda.rows(lay.e[g], rows.len()).into_owned();
        add_rows_t(&mut stationarity, rows, &lam, n);
        dual_value -= rows.rhs.dot(&lam);
    }
    let violation = stationarity.amax();
    if violation > tol * scale {
        return Err(IpError::DualInfeasible(format!("stationarity residual {violation:e}")));
    }
    Ok(p.objective(&st.x) - dual_value)
}

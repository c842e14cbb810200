//! Solver selection shared by the CLI and the experiments.

use std::fmt;
use std::str::FromStr;

use gks_core::firstorder::{
    solve_admm_l1, solve_cp, solve_fista, solve_prox_grad, solve_subgradient, AdmmOptions, CpOptions, CpVariant,
    FistaOptions, ProxGradOptions, StepRule, SubgradientOptions,
};
use gks_core::interior::{smoother_to_plq, solve_ip, IpOptions};
use gks_core::{DVector, SmootherProblem, SolverReport};

use crate::error::BenchError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverKind {
    Subgradient,
    ProxGrad,
    Fista,
    Admm,
    CpV1,
    CpV2,
    InteriorPoint,
}

impl SolverKind {
    pub const ALL: [SolverKind; 7] = [
        SolverKind::Subgradient,
        SolverKind::ProxGrad,
        SolverKind::Fista,
        SolverKind::Admm,
        SolverKind::CpV1,
        SolverKind::CpV2,
        SolverKind::InteriorPoint,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            SolverKind::Subgradient => "subgrad",
            SolverKind::ProxGrad => "proxgrad",
            SolverKind::Fista => "fista",
            SolverKind::Admm => "admm",
            SolverKind::CpV1 => "cp-v1",
            SolverKind::CpV2 => "cp-v2",
            SolverKind::InteriorPoint => "ip",
        }
    }
}

impl fmt::Display for SolverKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SolverKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SolverKind::ALL.into_iter().find(|k| k.name() == s).ok_or_else(|| {
            let names: Vec<_> = SolverKind::ALL.iter().map(|k| k.name()).collect();
            format!("unknown solver {s:?}; expected one of {}", names.join(", "))
        })
    }
}

/// Tuning knobs; `None` keeps each solver's own default.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SolverSettings {
    pub eps: Option<f64>,
    pub max_iters: Option<usize>,
    pub tau: Option<f64>,
    pub sigma: Option<f64>,
    pub ip: IpOptions,
}

pub fn run_solver(kind: SolverKind, p: &SmootherProblem, s: &SolverSettings) -> Result<SolverReport, BenchError> {
    let report = match kind {
        SolverKind::Subgradient => {
            let mut o = SubgradientOptions::default();
            if let Some(k) = s.max_iters {
                o.max_iters = k;
            }
            if let Some(t) = s.tau {
                o.step = StepRule::Harmonic { scale: t };
            }
            solve_subgradient(p, &o)?
        }
        SolverKind::ProxGrad => {
            let mut o = ProxGradOptions::default();
            o.eps = s.eps.unwrap_or(o.eps);
            o.max_iters = s.max_iters.unwrap_or(o.max_iters);
            o.beta = s.tau.map(|t| 1.0 / t);
            solve_prox_grad(p, &o)?
        }
        SolverKind::Fista => {
            let mut o = FistaOptions::default();
            o.eps = s.eps.unwrap_or(o.eps);
            o.max_iters = s.max_iters.unwrap_or(o.max_iters);
            o.beta = s.tau.map(|t| 1.0 / t);
            solve_fista(p, &o)?
        }
        SolverKind::Admm => {
            let mut o = AdmmOptions::default();
            o.eps = s.eps.unwrap_or(o.eps);
            o.max_iters = s.max_iters.unwrap_or(o.max_iters);
            o.tau = s.tau.unwrap_or(o.tau);
            solve_admm_l1(p, &o)?
        }
        SolverKind::CpV1 | SolverKind::CpV2 => {
            let variant = if kind == SolverKind::CpV1 { CpVariant::V1 } else { CpVariant::V2 };
            let mut o = CpOptions::new(variant);
            o.eps = s.eps.unwrap_or(o.eps);
            o.max_iters = s.max_iters.unwrap_or(o.max_iters);
            o.tau = s.tau;
            o.sigma = s.sigma;
            solve_cp(p, &o)?
        }
        SolverKind::InteriorPoint => solve_ip(&smoother_to_plq(p)?, &s.ip)?.report,
    };
    Ok(report)
}

/// Interior-point solution of a smoothing problem.
pub fn ip_estimate(p: &SmootherProblem, opts: &IpOptions) -> Result<DVector<f64>, BenchError> {
    Ok(solve_ip(&smoother_to_plq(p)?, opts)?.report.x)
}

//! Experiment configuration.
//!
//! A config file is a TOML table laid over the experiment's defaults, so any
//! subset of fields may be given. The resolved config is written next to the
//! results.

use std::fmt;
use std::str::FromStr;

use gks_core::interior::IpOptions;
use serde::{Deserialize, Serialize};

use crate::error::BenchError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Rates,
    DcImpulse,
    DcOutliers,
    Constrained,
}

impl Experiment {
    pub fn name(&self) -> &'static str {
        match self {
            Experiment::Rates => "rates",
            Experiment::DcImpulse => "dc-impulse",
            Experiment::DcOutliers => "dc-outliers",
            Experiment::Constrained => "constrained",
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Experiment {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "rates" => Ok(Experiment::Rates),
            "dc-impulse" => Ok(Experiment::DcImpulse),
            "dc-outliers" => Ok(Experiment::DcOutliers),
            "constrained" => Ok(Experiment::Constrained),
            other => Err(BenchError::Config(format!("unknown experiment {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    /// Impulse probability (dc-impulse) or outlier fraction (the others).
    pub alpha: f64,
    /// Nominal measurement standard deviation.
    pub sigma: f64,
    /// Outliers have standard deviation `outlier_factor * sigma`.
    pub outlier_factor: f64,
    /// Standard deviation of the Gaussian disturbance (dc-outliers).
    pub disturbance_sigma: f64,
    /// Prior variance of each state component (spline experiments).
    pub prior_var: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GammaConfig {
    /// Fixed weight where no cross-validation is done.
    pub value: f64,
    pub cv_min: f64,
    pub cv_max: f64,
    pub cv_points: usize,
    pub folds: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    pub ip_eps: f64,
    pub ip_max_iters: usize,
    pub ip_theta: f64,
    /// Tolerance of the reference solve that defines `f*` (rates).
    pub reference_eps: f64,
    /// Chambolle-Pock iterations per variant (rates).
    pub cp_iters: usize,
    /// Subgradient iterations (rates).
    pub subgradient_iters: usize,
    /// Huber threshold (constrained).
    pub huber_kappa: f64,
}

impl SolverConfig {
    pub fn ip_options(&self) -> IpOptions {
        IpOptions { eps: self.ip_eps, max_iters: self.ip_max_iters, theta: self.ip_theta, ..IpOptions::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub seed: u64,
    /// Number of measurements `N`.
    pub horizon: usize,
    /// Monte Carlo runs.
    pub runs: usize,
    /// Sampling interval (spline experiments).
    pub dt: f64,
    pub noise: NoiseConfig,
    pub gamma: GammaConfig,
    pub solver: SolverConfig,
}

impl ExperimentConfig {
    /// Defaults:
    ///
    /// - `dc-impulse`: 200 runs of N = 200, impulse probability 0.01,
    ///   sigma 0.1, gamma by 5-fold CV over 20 log-spaced values in [0.1, 10].
    /// - `dc-outliers`: 200 runs of N = 200, outlier fraction 0.1 with factor
    ///   100, sigma 0.1, disturbance sigma 0.1.
    /// - `rates`: sine with dt = 0.1, N = 100, sigma 0.1, 10% outliers with
    ///   factor 10, prior variance 100, box [-1, 1].
    /// - `constrained`: exp(sin(4t)) with dt = 0.05, N = 200, sigma 0.05, 10%
    ///   outliers with standard deviation 10, Huber threshold 1.
    pub fn defaults(experiment: Experiment) -> Self {
        let solver = SolverConfig {
            ip_eps: 1e-8,
            ip_max_iters: 200,
            ip_theta: 0.1,
            reference_eps: 1e-12,
            cp_iters: 2000,
            subgradient_iters: 10_000,
            huber_kappa: 1.0,
        };
        let gamma = GammaConfig { value: 1.0, cv_min: 0.1, cv_max: 10.0, cv_points: 20, folds: 5 };
        let noise = NoiseConfig { alpha: 0.1, sigma: 0.1, outlier_factor: 100.0, disturbance_sigma: 0.1, prior_var: 100.0 };
        let base = Self { experiment, seed: 0, horizon: 200, runs: 200, dt: 0.1, noise, gamma, solver };
        match experiment {
            Experiment::DcImpulse => Self { noise: NoiseConfig { alpha: 0.01, ..base.noise.clone() }, ..base },
            Experiment::DcOutliers => base,
            Experiment::Rates => Self {
                horizon: 100,
                runs: 1,
                noise: NoiseConfig { outlier_factor: 10.0, ..base.noise.clone() },
                ..base
            },
            Experiment::Constrained => Self {
                horizon: 200,
                runs: 1,
                dt: 0.05,
                noise: NoiseConfig { sigma: 0.05, outlier_factor: 200.0, ..base.noise.clone() },
                ..base
            },
        }
    }

    /// Lays the TOML document `text` over the defaults of `experiment`.
    pub fn from_toml(experiment: Experiment, text: &str) -> Result<Self, BenchError> {
        let overrides: toml::Table = text.parse().map_err(|e| BenchError::Config(format!("{e}")))?;
        let mut merged = toml::Table::try_from(Self::defaults(experiment)).expect("defaults serialize");
        merge(&mut merged, overrides);
        let cfg: Self = toml::Value::Table(merged).try_into().map_err(|e| BenchError::Config(format!("{e}")))?;
        if cfg.experiment != experiment {
            return Err(BenchError::Config(format!("config is for {}, not {experiment}", cfg.experiment)));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        let bad = |what: &str| Err(BenchError::Config(what.to_string()));
        if self.horizon == 0 {
            return bad("horizon must be at least 1");
        }
        if self.runs == 0 {
            return bad("runs must be at least 1");
        }
        if !(self.dt > 0.0) {
            return bad("dt must be positive");
        }
        if !(0.0..=1.0).contains(&self.noise.alpha) {
            return bad("alpha must lie in [0, 1]");
        }
        if !(self.noise.sigma > 0.0 && self.noise.outlier_factor > 0.0 && self.noise.prior_var > 0.0) {
            return bad("noise scales must be positive");
        }
        let g = &self.gamma;
        if !(g.value > 0.0 && g.cv_min > 0.0 && g.cv_max >= g.cv_min) || g.cv_points == 0 || g.folds < 2 {
            return bad("gamma grid needs 0 < cv_min <= cv_max, at least one point and two folds");
        }
        if !(self.solver.ip_eps > 0.0 && self.solver.ip_theta > 0.0 && self.solver.ip_theta < 1.0) {
            return bad("ip_eps must be positive and ip_theta in (0, 1)");
        }
        Ok(())
    }
}

fn merge(base: &mut toml::Table, over: toml::Table) {
    for (key, value) in over {
        match (base.get_mut(&key), value) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(key, v);
            }
        }
    }
}

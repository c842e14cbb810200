//! The benchmark experiments.

use std::path::Path;

use gks_core::firstorder::{solve_cp, solve_subgradient, CpOptions, CpVariant, StepRule, SubgradientOptions};
use gks_core::interior::{smoother_to_plq, solve_ip, solve_ip_observed, IpOptions};
use gks_core::statespace::{stack, LtvModel};
use gks_core::{ConstraintSet, DVector, IpError, ScalarLoss, SmootherProblem};

use crate::config::{Experiment, ExperimentConfig};
use crate::cv::{cross_validate_gamma, fold_assignment, log_grid};
use crate::error::BenchError;
use crate::metrics::{fit_metric, rmse, FitTable};
use crate::models::{
    dc_b, dc_motor_model, disturbance_readout, spline_model, with_measurement_variance, DcScenario, Instance,
    MeasurementNoise, SplineSignal,
};
use crate::solvers::ip_estimate;
use crate::table::Table;

/// Runs `f(0..runs)` on all available cores; results are ordered by run.
pub fn par_map<T, F>(runs: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync,
{
    let threads = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1).min(runs.max(1));
    if threads <= 1 {
        return (0..runs).map(f).collect();
    }
    let f = &f;
    let mut chunks: Vec<Vec<T>> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..threads)
            .map(|k| scope.spawn(move || (k..runs).step_by(threads).map(f).collect::<Vec<T>>()))
            .collect();
        handles.into_iter().map(|h| h.join().expect("worker panicked")).collect()
    });
    let mut iters: Vec<_> = chunks.iter_mut().map(|c| c.drain(..)).collect();
    (0..runs).map(|i| iters[i % threads].next().expect("one result per run")).collect()
}

fn states_of(x: &DVector<f64>, n: usize) -> Vec<DVector<f64>> {
    (0..x.len() / n).map(|t| x.rows(t * n, n).into_owned()).collect()
}

fn problem(model: &LtvModel, v: ScalarLoss, j: ScalarLoss, gamma: f64, set: ConstraintSet) -> Result<SmootherProblem, BenchError> {
    Ok(SmootherProblem::new(stack(model)?, v, j, gamma, set)?)
}

// ---------------------------------------------------------------------------
// DC motor, impulsive disturbance

#[derive(Debug, Clone, PartialEq)]
pub struct ImpulsiveOutcome {
    /// Columns `l2_opt` and `lasso_cv`.
    pub fits: FitTable,
    pub gammas: Vec<f64>,
}

/// Model for `sum (y_t - C x_t)^2 + gamma sum |d_t|` in smoother form:
/// `R = 1/2` turns the half-weighted quadratic into a plain sum of squares,
/// and `Q = k B B^T` with `k = (||B||_1 / ||B||_2)^2` makes the l1 norm of the
/// weighted process residual `W_Q B d` equal to `|d|`.
pub fn lasso_model(model: &LtvModel) -> LtvModel {
    let b = dc_b();
    let k = (b.abs().sum() / b.norm()).powi(2);
    let mut out = with_measurement_variance(model, 0.5);
    for q in &mut out.q {
        *q = &b * b.transpose() * k;
    }
    out
}

/// Stream stride between redraws of one run, above the fold streams.
const REDRAW_STRIDE: u64 = 1 << 40;

/// The fit is undefined without any impulse, so such draws are replaced by
/// the next redraw stream of the same run.
pub fn impulsive_instance(cfg: &ExperimentConfig, run: usize) -> Instance {
    let noise = MeasurementNoise::gaussian(cfg.noise.sigma);
    let scenario = DcScenario::Impulsive { alpha: cfg.noise.alpha };
    let mut attempt = 0u64;
    loop {
        let inst = dc_motor_model(scenario, noise, cfg.horizon, cfg.seed, run as u64 + attempt * REDRAW_STRIDE);
        if inst.disturbance.iter().any(|d| *d != 0.0) || attempt == 1000 {
            return inst;
        }
        attempt += 1;
    }
}

pub fn run_impulsive_mc(cfg: &ExperimentConfig) -> Result<ImpulsiveOutcome, BenchError> {
    let grid = log_grid(cfg.gamma.cv_min, cfg.gamma.cv_max, cfg.gamma.cv_points);
    let ip = cfg.solver.ip_options();
    let results = par_map(cfg.runs, |run| -> Result<(f64, f64, f64), BenchError> {
        let inst = impulsive_instance(cfg, run);
        let l2 = problem(&inst.model, ScalarLoss::Quadratic, ScalarLoss::Quadratic, 1.0, ConstraintSet::Unconstrained)?;
        let d_l2 = disturbance_readout(&states_of(&ip_estimate(&l2, &ip)?, 2));
        let lasso =
            problem(&lasso_model(&inst.model), ScalarLoss::Quadratic, ScalarLoss::L1, 1.0, ConstraintSet::Unconstrained)?;
        let labels = fold_assignment(cfg.horizon, cfg.gamma.folds, cfg.seed, run as u64);
        let cv = cross_validate_gamma(&lasso, &grid, &labels, cfg.gamma.folds, |p| ip_estimate(p, &ip))?;
        let d_lasso = disturbance_readout(&states_of(&ip_estimate(&lasso.with_gamma(cv.gamma), &ip)?, 2));
        Ok((fit_metric(&d_l2, &inst.disturbance)?, fit_metric(&d_lasso, &inst.disturbance)?, cv.gamma))
    });
    let mut out = ImpulsiveOutcome { fits: FitTable::default(), gammas: Vec::new() };
    for r in results {
        let (l2, lasso, gamma) = r?;
        out.fits.push("l2_opt", l2);
        out.fits.push("lasso_cv", lasso);
        out.gammas.push(gamma);
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// DC motor, measurement outliers

#[derive(Debug, Clone, PartialEq)]
pub struct OutlierOutcome {
    /// Columns `l2_nom`, `l2_opt`, `l1_nom` at the configured outlier fraction.
    pub contaminated: FitTable,
    /// The same estimators without outliers.
    pub control: FitTable,
}

/// Fits of the shaft angle for one run of the outlier study.
fn outlier_run(cfg: &ExperimentConfig, alpha: f64, run: usize, ip: &IpOptions) -> Result<[f64; 3], BenchError> {
    let noise = MeasurementNoise { sigma: cfg.noise.sigma, outlier_fraction: alpha, outlier_factor: cfg.noise.outlier_factor };
    let scenario = DcScenario::GaussianDisturbance { sigma_d: cfg.noise.disturbance_sigma };
    let inst = dc_motor_model(scenario, noise, cfg.horizon, cfg.seed, run as u64);
    let truth: Vec<f64> = inst.states[1..].iter().map(|x| x[1]).collect();
    let angle = |x: DVector<f64>| -> Vec<f64> { (1..=cfg.horizon).map(|t| x[2 * t + 1]).collect() };
    let quad = ScalarLoss::Quadratic;
    let nom = problem(&inst.model, quad, quad, 1.0, ConstraintSet::Unconstrained)?;
    let opt = problem(&with_measurement_variance(&inst.model, noise.variance()), quad, quad, 1.0, ConstraintSet::Unconstrained)?;
    // gamma = 2 weights the disturbance by 1/sigma_d^2 without the usual 1/2.
    let l1 = problem(&inst.model, ScalarLoss::L1, quad, 2.0, ConstraintSet::Unconstrained)?;
    Ok([
        fit_metric(&angle(ip_estimate(&nom, ip)?), &truth)?,
        fit_metric(&angle(ip_estimate(&opt, ip)?), &truth)?,
        fit_metric(&angle(ip_estimate(&l1, ip)?), &truth)?,
    ])
}

pub fn run_outlier_mc(cfg: &ExperimentConfig) -> Result<OutlierOutcome, BenchError> {
    let ip = cfg.solver.ip_options();
    let mut out = OutlierOutcome { contaminated: FitTable::default(), control: FitTable::default() };
    for (alpha, table) in [(cfg.noise.alpha, &mut out.contaminated), (0.0, &mut out.control)] {
        for r in par_map(cfg.runs, |run| outlier_run(cfg, alpha, run, &ip)) {
            let [nom, opt, l1] = r?;
            table.push("l2_nom", nom);
            table.push("l2_opt", opt);
            table.push("l1_nom", l1);
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Convergence rates

#[derive(Debug, Clone, PartialEq)]
pub struct RateRow {
    pub solver: String,
    pub iteration: usize,
    pub objective: f64,
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RatesOutcome {
    pub f_star: f64,
    /// Sorted by `(solver, iteration)`.
    pub rows: Vec<RateRow>,
}

impl RatesOutcome {
    pub fn gaps(&self, solver: &str) -> Vec<f64> {
        self.rows.iter().filter(|r| r.solver == solver).map(|r| r.gap).collect()
    }

    /// First iteration whose gap is at most `tol`.
    pub fn iterations_to(&self, solver: &str, tol: f64) -> Option<usize> {
        self.rows.iter().find(|r| r.solver == solver && r.gap <= tol).map(|r| r.iteration)
    }

    pub fn gap_at(&self, solver: &str, iteration: usize) -> Option<f64> {
        self.rows.iter().find(|r| r.solver == solver && r.iteration == iteration).map(|r| r.gap)
    }
}

/// The l1 sine-tracking problem: l1 measurement loss, quadratic process
/// loss, every state component boxed to `[-1, 1]` when `boxed`.
pub fn sine_problem(cfg: &ExperimentConfig, boxed: bool) -> Result<SmootherProblem, BenchError> {
    let noise = MeasurementNoise { sigma: cfg.noise.sigma, outlier_fraction: cfg.noise.alpha, outlier_factor: cfg.noise.outlier_factor };
    let inst = spline_model(cfg.dt, cfg.horizon, SplineSignal::Sine, noise, cfg.noise.prior_var, cfg.seed, 0);
    let dim = 2 * (cfg.horizon + 1);
    let set = if boxed {
        ConstraintSet::Box { lo: DVector::from_element(dim, -1.0), hi: DVector::from_element(dim, 1.0) }
    } else {
        ConstraintSet::Unconstrained
    };
    problem(&inst.model, ScalarLoss::L1, ScalarLoss::Quadratic, cfg.gamma.value, set)
}

pub fn run_rates(cfg: &ExperimentConfig) -> Result<RatesOutcome, BenchError> {
    let p = sine_problem(cfg, true)?;
    let plq = smoother_to_plq(&p)?;
    let reference = IpOptions { eps: cfg.solver.reference_eps, ..cfg.solver.ip_options() };
    // A reference solve that stalls short of its tolerance still gives the
    // best available estimate of the minimum.
    let x_star = match solve_ip(&plq, &reference) {
        Ok(sol) => sol.report.x,
        Err(IpError::MaxItersExceeded { best, .. }) => best.report.x,
        Err(e) => return Err(e.into()),
    };
    let f_star = p.objective(&p.project(&x_star)?);

    let mut rows = Vec::new();
    let mut push = |solver: &str, objectives: Vec<f64>| {
        for (k, f) in objectives.into_iter().enumerate() {
            rows.push(RateRow { solver: solver.to_string(), iteration: k + 1, objective: f, gap: f - f_star });
        }
    };
    let sub = solve_subgradient(
        &p,
        &SubgradientOptions { max_iters: cfg.solver.subgradient_iters, step: StepRule::Harmonic { scale: 1.0 } },
    )?;
    // Subgradient steps do not descend, so its curve is the best value so far.
    push("subgrad", sub.best_objectives());
    for (name, variant) in [("cp-v1", CpVariant::V1), ("cp-v2", CpVariant::V2)] {
        let opts = CpOptions { eps: 0.0, max_iters: cfg.solver.cp_iters, ..CpOptions::new(variant) };
        push(name, solve_cp(&p, &opts)?.records.iter().map(|r| r.objective).collect());
    }
    // Interior iterates may sit slightly outside the box, so their objective
    // is taken at the projection like the other solvers'.
    let mut ip_obj = Vec::new();
    let ip_run = solve_ip_observed(&plq, gks_core::interior::KktState::initial(&plq), &cfg.solver.ip_options(), |_, st| {
        ip_obj.push(p.project(&st.x).map(|x| p.objective(&x)))
    });
    match ip_run {
        Ok(_) | Err(IpError::MaxItersExceeded { .. }) => {}
        Err(e) => return Err(e.into()),
    }
    push("ip", ip_obj.into_iter().collect::<Result<Vec<_>, _>>()?);
    rows.sort_by(|a, b| a.solver.cmp(&b.solver).then(a.iteration.cmp(&b.iteration)));
    Ok(RatesOutcome { f_star, rows })
}

// ---------------------------------------------------------------------------
// Constrained tracking

#[derive(Debug, Clone, PartialEq)]
pub struct ConstrainedOutcome {
    pub time: Vec<f64>,
    pub truth: Vec<f64>,
    pub measurements: Vec<f64>,
    /// Position estimates at the measurement times, keyed `l2`, `cl2`,
    /// `huber`, `chuber`.
    pub estimates: Vec<(String, Vec<f64>)>,
}

impl ConstrainedOutcome {
    pub fn estimate(&self, name: &str) -> &[f64] {
        self.estimates.iter().find(|(k, _)| k == name).map(|(_, v)| v.as_slice()).unwrap_or(&[])
    }

    pub fn rmse(&self, name: &str) -> f64 {
        rmse(self.estimate(name), &self.truth)
    }
}

/// Lower and upper bound on the position.
pub fn expsin_bounds() -> (f64, f64) {
    ((-1f64).exp(), 1f64.exp())
}

pub fn run_constrained(cfg: &ExperimentConfig) -> Result<ConstrainedOutcome, BenchError> {
    let noise = MeasurementNoise { sigma: cfg.noise.sigma, outlier_fraction: cfg.noise.alpha, outlier_factor: cfg.noise.outlier_factor };
    let inst = spline_model(cfg.dt, cfg.horizon, SplineSignal::ExpSin, noise, cfg.noise.prior_var, cfg.seed, 0);
    let dim = 2 * (cfg.horizon + 1);
    let (lo, hi) = expsin_bounds();
    let boxed = ConstraintSet::Box {
        lo: DVector::from_fn(dim, |i, _| if i % 2 == 1 { lo } else { f64::NEG_INFINITY }),
        hi: DVector::from_fn(dim, |i, _| if i % 2 == 1 { hi } else { f64::INFINITY }),
    };
    let huber = ScalarLoss::Huber { kappa: cfg.solver.huber_kappa };
    let quad = ScalarLoss::Quadratic;
    let ip = cfg.solver.ip_options();
    let position = |x: DVector<f64>| -> Vec<f64> { (1..=cfg.horizon).map(|t| x[2 * t + 1]).collect() };
    let mut estimates = Vec::new();
    for (name, loss, set) in [
        ("l2", quad, ConstraintSet::Unconstrained),
        ("cl2", quad, boxed.clone()),
        ("huber", huber, ConstraintSet::Unconstrained),
        ("chuber", huber, boxed.clone()),
    ] {
        let p = problem(&inst.model, loss, loss, cfg.gamma.value, set)?;
        estimates.push((name.to_string(), position(ip_estimate(&p, &ip)?)));
    }
    Ok(ConstrainedOutcome {
        time: (1..=cfg.horizon).map(|t| t as f64 * cfg.dt).collect(),
        truth: inst.states[1..].iter().map(|x| x[1]).collect(),
        measurements: inst.model.y.iter().map(|y| y[0]).collect(),
        estimates,
    })
}

// ---------------------------------------------------------------------------
// Tables and files

impl ImpulsiveOutcome {
    pub fn table(&self) -> Table {
        let mut t = Table::new(&["run", "l2_opt", "lasso_cv", "gamma"]);
        for (i, g) in self.gammas.iter().enumerate() {
            t.push(vec![i as f64, self.fits.column("l2_opt")[i], self.fits.column("lasso_cv")[i], *g]);
        }
        t
    }
}

impl OutlierOutcome {
    pub fn table(&self, alpha: f64) -> Table {
        let mut t = Table::new(&["run", "alpha", "l2_nom", "l2_opt", "l1_nom"]);
        for (a, fits) in [(alpha, &self.contaminated), (0.0, &self.control)] {
            for i in 0..fits.column("l2_nom").len() {
                t.push(vec![i as f64, a, fits.column("l2_nom")[i], fits.column("l2_opt")[i], fits.column("l1_nom")[i]]);
            }
        }
        t
    }
}

impl ConstrainedOutcome {
    pub fn table(&self) -> Table {
        let mut names = vec!["t", "truth", "y"];
        names.extend(self.estimates.iter().map(|(k, _)| k.as_str()));
        let mut t = Table::new(&names);
        for i in 0..self.time.len() {
            let mut row = vec![self.time[i], self.truth[i], self.measurements[i]];
            row.extend(self.estimates.iter().map(|(_, v)| v[i]));
            t.push(row);
        }
        t
    }
}

/// Runs one experiment and writes `<out>/<experiment>.csv` and
/// `<out>/config.resolved.toml`. Returns a short text summary.
pub fn run_experiment(cfg: &ExperimentConfig, out: &Path) -> Result<String, BenchError> {
    std::fs::create_dir_all(out)?;
    std::fs::write(out.join("config.resolved.toml"), cfg.to_toml())?;
    let csv = out.join(format!("{}.csv", cfg.experiment));
    let summary = match cfg.experiment {
        Experiment::DcImpulse => {
            let r = run_impulsive_mc(cfg)?;
            r.table().write_csv(&csv)?;
            format!("median fit: l2_opt {:.2}, lasso_cv {:.2}", r.fits.median("l2_opt"), r.fits.median("lasso_cv"))
        }
        Experiment::DcOutliers => {
            let r = run_outlier_mc(cfg)?;
            r.table(cfg.noise.alpha).write_csv(&csv)?;
            let med = |t: &FitTable| {
                format!("l2_nom {:.2}, l2_opt {:.2}, l1_nom {:.2}", t.median("l2_nom"), t.median("l2_opt"), t.median("l1_nom"))
            };
            format!("median fit (alpha {}): {}\nmedian fit (alpha 0): {}", cfg.noise.alpha, med(&r.contaminated), med(&r.control))
        }
        Experiment::Rates => {
            let r = run_rates(cfg)?;
            write_rates_csv(&r, &csv)?;
            let its = |s: &str, tol: f64| r.iterations_to(s, tol).map_or("-".to_string(), |k| k.to_string());
            format!(
                "f* = {:.12e}; iterations to gap 1e-8: ip {}, cp-v2 {}, cp-v1 {}, subgrad {}",
                r.f_star,
                its("ip", 1e-8),
                its("cp-v2", 1e-8),
                its("cp-v1", 1e-8),
                its("subgrad", 1e-8)
            )
        }
        Experiment::Constrained => {
            let r = run_constrained(cfg)?;
            r.table().write_csv(&csv)?;
            let parts: Vec<String> = r.estimates.iter().map(|(k, _)| format!("{k} {:.4}", r.rmse(k))).collect();
            format!("rmse: {}", parts.join(", "))
        }
    };
    Ok(summary)
}

pub fn write_rates_csv(r: &RatesOutcome, path: &Path) -> Result<(), BenchError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["solver", "iteration", "objective", "gap"])?;
    for row in &r.rows {
        w.write_record([
            row.solver.clone(),
            row.iteration.to_string(),
            crate::table::format_f64(row.objective),
            crate::table::format_f64(row.gap),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_rates_csv(path: &Path) -> Result<Vec<RateRow>, BenchError> {
    let mut rd = csv::Reader::from_path(path)?;
    let mut rows = Vec::new();
    for rec in rd.records() {
        let rec = rec?;
        let num = |i: usize| rec[i].parse::<f64>().map_err(|e| BenchError::Config(format!("bad number: {e}")));
        rows.push(RateRow {
            solver: rec[0].to_string(),
            iteration: rec[1].parse().map_err(|e| BenchError::Config(format!("bad iteration: {e}")))?,
            objective: num(2)?,
            gap: num(3)?,
        });
    }
    Ok(rows)
}

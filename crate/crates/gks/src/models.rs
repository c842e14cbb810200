//! Data generators for the DC motor and spline tracking experiments.

use gks_core::statespace::{rng_for, simulate_with, standard_normal, LtvModel, NoiseKind, NoiseSpec};
use gks_core::{DMatrix, DVector};
use rand::Rng;

/// Torque gain on the shaft angular velocity.
pub const DC_B1: f64 = 11.81;
pub const DC_B2: f64 = 0.62;

pub fn dc_a() -> DMatrix<f64> {
    DMatrix::from_row_slice(2, 2, &[0.7, 0.0, 0.084, 1.0])
}

pub fn dc_b() -> DMatrix<f64> {
    DMatrix::from_column_slice(2, 1, &[DC_B1, DC_B2])
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DcScenario {
    /// Disturbance is zero except with probability `alpha`, when it is standard
    /// normal; `Q = alpha B B^T`.
    Impulsive { alpha: f64 },
    /// `d_t ~ N(0, sigma_d^2)`, `Q = sigma_d^2 B B^T`.
    GaussianDisturbance { sigma_d: f64 },
}

/// Measurement noise: Gaussian, or a two-component outlier mixture.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeasurementNoise {
    pub sigma: f64,
    pub outlier_fraction: f64,
    pub outlier_factor: f64,
}

impl MeasurementNoise {
    pub fn gaussian(sigma: f64) -> Self {
        Self { sigma, outlier_fraction: 0.0, outlier_factor: 1.0 }
    }

    /// `(1 - alpha) sigma^2 + alpha (factor sigma)^2`.
    pub fn variance(&self) -> f64 {
        let s2 = self.sigma * self.sigma;
        (1.0 - self.outlier_fraction) * s2 + self.outlier_fraction * self.outlier_factor.powi(2) * s2
    }

    fn kind(&self) -> NoiseKind {
        if self.outlier_fraction > 0.0 {
            NoiseKind::GaussianMixtureOutlier { alpha: self.outlier_fraction, factor: self.outlier_factor }
        } else {
            NoiseKind::Gaussian
        }
    }
}

/// A simulated experiment: the model with its data, the true states and the
/// true disturbance `d_0..d_{N-1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub model: LtvModel,
    pub states: Vec<DVector<f64>>,
    pub disturbance: Vec<f64>,
}

/// DC motor with `x_0 = 0` known exactly and no inputs. The model's `R` is the
/// nominal `sigma^2` of `noise`.
pub fn dc_motor_model(scenario: DcScenario, noise: MeasurementNoise, horizon: usize, seed: u64, run: u64) -> Instance {
    let b = dc_b();
    let (q, process) = match scenario {
        DcScenario::Impulsive { alpha } => (&b * b.transpose() * alpha, NoiseKind::BernoulliGaussian { alpha }),
        DcScenario::GaussianDisturbance { sigma_d } => (&b * b.transpose() * (sigma_d * sigma_d), NoiseKind::Gaussian),
    };
    let mut model = LtvModel::time_invariant(
        dc_a(),
        DMatrix::zeros(2, 1),
        DMatrix::from_row_slice(1, 2, &[0.0, 1.0]),
        q,
        DMatrix::from_element(1, 1, noise.sigma * noise.sigma),
        DVector::zeros(2),
        DMatrix::zeros(2, 2),
        vec![DVector::zeros(1); horizon],
        vec![DVector::zeros(1); horizon],
    );
    let spec = NoiseSpec { process, measurement: noise.kind() };
    let traj = simulate_with(&model, &spec, &mut rng_for(seed, run)).expect("DC motor model is valid");
    model.y = traj.measurements;
    let disturbance = traj.process_noise.iter().map(|v| v[0] / DC_B1).collect();
    Instance { model, states: traj.states, disturbance }
}

/// `d_t = (1/b_1, 0) (x_{t+1} - A x_t)` for `t = 0..N-1`.
pub fn disturbance_readout(states: &[DVector<f64>]) -> Vec<f64> {
    let a = dc_a();
    states.windows(2).map(|w| (&w[1] - &a * &w[0])[0] / DC_B1).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplineSignal {
    /// `sin(-t)`.
    Sine,
    /// `exp(sin(4t))`.
    ExpSin,
}

impl SplineSignal {
    pub fn value(&self, t: f64) -> f64 {
        match self {
            SplineSignal::Sine => (-t).sin(),
            SplineSignal::ExpSin => (4.0 * t).sin().exp(),
        }
    }

    pub fn derivative(&self, t: f64) -> f64 {
        match self {
            SplineSignal::Sine => -(-t).cos(),
            SplineSignal::ExpSin => 4.0 * (4.0 * t).cos() * (4.0 * t).sin().exp(),
        }
    }
}

/// Integrated Brownian motion observed through the position at `t = k dt`.
/// States are `(velocity, position)`. The prior is `N(0, prior_var I)`.
pub fn spline_model(
    dt: f64,
    horizon: usize,
    signal: SplineSignal,
    noise: MeasurementNoise,
    prior_var: f64,
    seed: u64,
    run: u64,
) -> Instance {
    let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, dt, 1.0]);
    let q = DMatrix::from_row_slice(2, 2, &[dt, dt * dt / 2.0, dt * dt / 2.0, dt * dt * dt / 3.0]);
    let mut rng = rng_for(seed, run);
    let states: Vec<DVector<f64>> = (0..=horizon)
        .map(|k| {
            let t = k as f64 * dt;
            DVector::from_vec(vec![signal.derivative(t), signal.value(t)])
        })
        .collect();
    let y = states[1..]
        .iter()
        .map(|x| {
            let scale = if noise.outlier_fraction > 0.0 && rng.random::<f64>() < noise.outlier_fraction {
                noise.outlier_factor
            } else {
                1.0
            };
            DVector::from_element(1, x[1] + noise.sigma * scale * standard_normal(&mut rng))
        })
        .collect();
    let model = LtvModel::time_invariant(
        a,
        DMatrix::zeros(2, 1),
        DMatrix::from_row_slice(1, 2, &[0.0, 1.0]),
        q,
        DMatrix::from_element(1, 1, noise.sigma * noise.sigma),
        DVector::zeros(2),
        DMatrix::identity(2, 2) * prior_var,
        vec![DVector::zeros(1); horizon],
        y,
    );
    Instance { model, states, disturbance: Vec::new() }
}

/// Returns `model` with every `R_t` replaced by `r`.
pub fn with_measurement_variance(model: &LtvModel, r: f64) -> LtvModel {
    let mut out = model.clone();
    for rt in &mut out.r {
        rt.fill(r);
    }
    out
}

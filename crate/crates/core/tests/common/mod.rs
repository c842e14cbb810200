#![allow(dead_code)]

use gks_core::statespace::{rng_for, simulate, stack, standard_normal, LtvModel, NoiseSpec, StackedSystem};
use gks_core::{DMatrix, DVector};
use rand::Rng;

pub fn random_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize, scale: f64) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| scale * standard_normal(rng))
}

pub fn random_spd<R: Rng>(rng: &mut R, n: usize) -> DMatrix<f64> {
    let g = random_matrix(rng, n, n, 1.0);
    &g * g.transpose() + DMatrix::identity(n, n) * 0.5
}

/// A random time-varying model with SPD covariances and simulated data.
pub fn random_model(seed: u64, n: usize, m: usize, horizon: usize) -> LtvModel {
    let mut rng = rng_for(seed, 99);
    let mut model = LtvModel {
        a: (0..horizon).map(|_| random_matrix(&mut rng, n, n, 0.5)).collect(),
        b: vec![DMatrix::zeros(n, 1); horizon],
        c: (0..horizon).map(|_| random_matrix(&mut rng, m, n, 1.0)).collect(),
        q: (0..horizon).map(|_| random_spd(&mut rng, n)).collect(),
        r: (0..horizon).map(|_| random_spd(&mut rng, m)).collect(),
        s: None,
        mu: DVector::from_fn(n, |_, _| standard_normal(&mut rng)),
        pi: random_spd(&mut rng, n),
        u: vec![DVector::zeros(1); horizon],
        y: vec![DVector::zeros(m); horizon],
    };
    let traj = simulate(&model, &NoiseSpec::gaussian(), seed).unwrap();
    model.y = traj.measurements;
    model
}

pub fn random_system(seed: u64, n: usize, m: usize, horizon: usize) -> StackedSystem {
    stack(&random_model(seed, n, m, horizon)).unwrap()
}

/// Spline model observed through the position, with data from `truth`.
pub fn spline(dt: f64, horizon: usize, sigma: f64, seed: u64, truth: impl Fn(f64) -> f64) -> LtvModel {
    let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, dt, 1.0]);
    let q = DMatrix::from_row_slice(2, 2, &[dt, dt * dt / 2.0, dt * dt / 2.0, dt * dt * dt / 3.0]);
    let c = DMatrix::from_row_slice(1, 2, &[0.0, 1.0]);
    let mut rng = rng_for(seed, 7);
    let y = (1..=horizon)
        .map(|t| DVector::from_element(1, truth(t as f64 * dt) + sigma * standard_normal(&mut rng)))
        .collect();
    LtvModel::time_invariant(
        a,
        DMatrix::zeros(2, 1),
        c,
        q,
        DMatrix::from_element(1, 1, sigma * sigma),
        DVector::zeros(2),
        DMatrix::identity(2, 2) * 100.0,
        vec![DVector::zeros(1); horizon],
        y,
    )
}

pub fn rel_err(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).norm() / b.norm().max(1e-300)
}

//! K-fold cross-validation of the regularization weight.

use gks_core::statespace::rng_for;
use gks_core::{DVector, SmootherProblem};
use rand::seq::SliceRandom;

use crate::error::BenchError;

/// Stream offset for fold shuffles, kept apart from the data streams.
const FOLD_STREAM: u64 = 1 << 32;

/// `points` values from `lo` to `hi`, evenly spaced in `log`.
pub fn log_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    match points {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..points).map(|k| lo * (hi / lo).powf(k as f64 / (points - 1) as f64)).collect(),
    }
}

/// Fold label of each measurement: a seeded shuffle dealt round-robin, so
/// fold sizes differ by at most one.
pub fn fold_assignment(horizon: usize, folds: usize, seed: u64, run: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..horizon).collect();
    order.shuffle(&mut rng_for(seed, FOLD_STREAM + run));
    let mut label = vec![0; horizon];
    for (pos, &t) in order.iter().enumerate() {
        label[t] = pos % folds;
    }
    label
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvOutcome {
    pub gamma: f64,
    /// Mean held-out squared prediction error per grid value.
    pub errors: Vec<f64>,
}

/// Picks the grid value with the smallest held-out prediction error
/// `sum ||y_t - C_t x_t||^2`, where each fold is smoothed with its own
/// measurements removed. Ties go to the larger value.
pub fn cross_validate_gamma<S>(
    problem: &SmootherProblem,
    grid: &[f64],
    labels: &[usize],
    folds: usize,
    solve: S,
) -> Result<CvOutcome, BenchError>
where
    S: Fn(&SmootherProblem) -> Result<DVector<f64>, BenchError>,
{
    if grid.is_empty() {
        return Err(BenchError::Config("empty gamma grid".into()));
    }
    if folds < 2 {
        return Err(BenchError::Config("cross-validation needs at least two folds".into()));
    }
    let sys = problem.sys();
    let (n, m) = (sys.state_dim(), sys.meas_dim());
    let mut errors = vec![0.0; grid.len()];
    for fold in 0..folds {
        let keep: Vec<bool> = labels.iter().map(|&l| l != fold).collect();
        let masked = problem.clone().with_measurement_mask(&keep);
        for (g, &gamma) in grid.iter().enumerate() {
            let x = solve(&masked.clone().with_gamma(gamma))?;
            for (t, &k) in keep.iter().enumerate() {
                if !k {
                    let pred = &sys.c[t] * x.rows((t + 1) * n, n);
                    errors[g] += (sys.y.rows(t * m, m) - pred).norm_squared();
                }
            }
        }
    }
    for e in &mut errors {
        *e /= labels.len() as f64;
    }
    let mut best = 0;
    for g in 1..grid.len() {
        if errors[g] < errors[best] || (errors[g] == errors[best] && grid[g] > grid[best]) {
            best = g;
        }
    }
    Ok(CvOutcome { gamma: grid[best], errors })
}

use std::collections::BTreeMap;

use crate::error::BenchError;

/// `100 (1 - ||estimate - truth|| / ||truth||)`; negative when the estimate
/// is worse than zero.
pub fn fit_metric(estimate: &[f64], truth: &[f64]) -> Result<f64, BenchError> {
    assert_eq!(estimate.len(), truth.len(), "fit needs equal lengths");
    let norm = truth.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err(BenchError::ZeroTruth);
    }
    let err = estimate.iter().zip(truth).map(|(e, t)| (e - t).powi(2)).sum::<f64>().sqrt();
    Ok(100.0 * (1.0 - err / norm))
}

pub fn rmse(estimate: &[f64], truth: &[f64]) -> f64 {
    assert_eq!(estimate.len(), truth.len(), "rmse needs equal lengths");
    let ss: f64 = estimate.iter().zip(truth).map(|(e, t)| (e - t).powi(2)).sum();
    (ss / truth.len() as f64).sqrt()
}

/// Sample quantile with linear interpolation between order statistics
/// (`h = (n - 1) p`).
pub fn quantile(values: &[f64], p: f64) -> f64 {
    assert!(!values.is_empty(), "quantile of an empty sample");
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn median(values: &[f64]) -> f64 {
    quantile(values, 0.5)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Self {
        Self {
            min: quantile(values, 0.0),
            q1: quantile(values, 0.25),
            median: quantile(values, 0.5),
            q3: quantile(values, 0.75),
            max: quantile(values, 1.0),
        }
    }
}

/// Per-run fit values, one column per estimator.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FitTable {
    pub columns: BTreeMap<String, Vec<f64>>,
}

impl FitTable {
    pub fn push(&mut self, estimator: &str, fit: f64) {
        self.columns.entry(estimator.to_string()).or_default().push(fit);
    }

    pub fn column(&self, estimator: &str) -> &[f64] {
        self.columns.get(estimator).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn median(&self, estimator: &str) -> f64 {
        median(self.column(estimator))
    }

    pub fn summaries(&self) -> BTreeMap<String, Summary> {
        self.columns.iter().map(|(k, v)| (k.clone(), Summary::of(v))).collect()
    }
}

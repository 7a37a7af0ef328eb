use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::data::Sex;

/// Regression accuracy over one set of subjects.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub n: usize,
    pub mae: f64,
    /// Population standard deviation of the absolute errors.
    pub mae_std: f64,
    pub rmse: f64,
    /// `None` when the targets have zero variance.
    pub r2: Option<f64>,
}

pub fn compute_metrics(y: &[f64], y_hat: &[f64]) -> Result<MetricsReport, EvalError> {
    if y.len() != y_hat.len() {
        return Err(EvalError::Length {
            targets: y.len(),
            predictions: y_hat.len(),
        });
    }
    if y.is_empty() {
        return Err(EvalError::Empty);
    }
    if let Some(v) = y.iter().chain(y_hat).find(|v| !v.is_finite()) {
        return Err(EvalError::NonFinite(*v));
    }
    let n = y.len() as f64;
    let abs: Vec<f64> = y.iter().zip(y_hat).map(|(a, b)| (a - b).abs()).collect();
    let mae = abs.iter().sum::<f64>() / n;
    let mae_std = (abs.iter().map(|e| (e - mae).powi(2)).sum::<f64>() / n).sqrt();
    let sse: f64 = abs.iter().map(|e| e * e).sum();
    let rmse = (sse / n).sqrt();
    let mean = y.iter().sum::<f64>() / n;
    let sst: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    let r2 = (sst > 0.0).then(|| 1.0 - sse / sst);
    Ok(MetricsReport {
        n: y.len(),
        mae,
        mae_std,
        rmse,
        r2,
    })
}

/// Left-inclusive age bins `[lo, hi)`.
pub const AGE_BINS: [(f64, f64); 4] = [(0.0, 25.0), (25.0, 35.0), (35.0, 45.0), (45.0, 55.0)];

/// Index of the age bin containing `age`, if any.
pub fn age_bin(age: f64) -> Option<usize> {
    AGE_BINS.iter().position(|&(lo, hi)| age >= lo && age < hi)
}

/// Overall, per-sex and per-age-bin metrics. Empty cells are `None`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupMetrics {
    pub overall: MetricsReport,
    pub male: Option<MetricsReport>,
    pub female: Option<MetricsReport>,
    /// G1 to G4.
    pub age_groups: [Option<MetricsReport>; 4],
    /// Subjects outside every age bin.
    pub unbinned: usize,
}

impl GroupMetrics {
    pub fn age_group_counts(&self) -> [usize; 4] {
        self.age_groups.map(|g| g.map_or(0, |m| m.n))
    }
}

fn subset(
    y: &[f64],
    y_hat: &[f64],
    keep: impl Fn(usize) -> bool,
) -> Result<Option<MetricsReport>, EvalError> {
    let (a, b): (Vec<f64>, Vec<f64>) = (0..y.len())
        .filter(|&i| keep(i))
        .map(|i| (y[i], y_hat[i]))
        .unzip();
    if a.is_empty() {
        Ok(None)
    } else {
        compute_metrics(&a, &b).map(Some)
    }
}

/// Breakdown of predictions `y_hat` for subjects with the given sexes and ages.
pub fn group_breakdown(sex: &[Sex], age: &[f64], y_hat: &[f64]) -> Result<GroupMetrics, EvalError> {
    if sex.len() != age.len() {
        return Err(EvalError::Length {
            targets: age.len(),
            predictions: sex.len(),
        });
    }
    let overall = compute_metrics(age, y_hat)?;
    let bins: Vec<Option<usize>> = age.iter().map(|&a| age_bin(a)).collect();
    let mut age_groups = [None; 4];
    for (g, cell) in age_groups.iter_mut().enumerate() {
        *cell = subset(age, y_hat, |i| bins[i] == Some(g))?;
    }
    Ok(GroupMetrics {
        overall,
        male: subset(age, y_hat, |i| sex[i] == Sex::Male)?,
        female: subset(age, y_hat, |i| sex[i] == Sex::Female)?,
        age_groups,
        unbinned: bins.iter().filter(|b| b.is_none()).count(),
    })
}

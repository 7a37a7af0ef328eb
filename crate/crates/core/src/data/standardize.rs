use serde::{Deserialize, Serialize};

use super::{DataError, Dataset};

/// Per-feature location and scale. Constant features keep mean 0 and std 1 so
/// they pass through unchanged.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub constant: Vec<bool>,
}

impl FeatureStats {
    fn fit<'a>(rows: impl Iterator<Item = &'a [f64]> + Clone, width: usize) -> Self {
        let n = rows.clone().count() as f64;
        let mut mean = vec![0.0; width];
        for r in rows.clone() {
            for (m, v) in mean.iter_mut().zip(r) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; width];
        for r in rows {
            for ((s, v), m) in var.iter_mut().zip(r).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let mut std = Vec::with_capacity(width);
        let mut constant = Vec::with_capacity(width);
        for (k, s) in var.iter().enumerate() {
            let sd = (s / n).sqrt();
            let scale = mean[k].abs().max(1.0);
            if sd <= 1e-12 * scale {
                constant.push(true);
                std.push(1.0);
                mean[k] = 0.0;
            } else {
                constant.push(false);
                std.push(sd);
            }
        }
        Self {
            mean,
            std,
            constant,
        }
    }

    pub fn width(&self) -> usize {
        self.mean.len()
    }

    pub fn transform(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }

    pub fn inverse(&self, z: &[f64]) -> Vec<f64> {
        z.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(v, (m, s))| v * s + m)
            .collect()
    }
}

/// Standardization fitted on one split, reusable on any other.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StandardizationStats {
    pub x1: FeatureStats,
    pub x2: Option<FeatureStats>,
    pub age_mean: f64,
    pub age_std: f64,
}

impl StandardizationStats {
    pub fn fit(dataset: &Dataset) -> Result<Self, DataError> {
        if dataset.len() < 2 {
            return Err(DataError::TooFew {
                needed: 2,
                found: dataset.len(),
            });
        }
        let recs = dataset.records();
        let x1 = FeatureStats::fit(recs.iter().map(|r| r.x1.as_slice()), dataset.m1());
        let x2 = dataset
            .m2()
            .map(|m2| FeatureStats::fit(recs.iter().filter_map(|r| r.x2.as_deref()), m2));
        let ages = dataset.ages();
        let n = ages.len() as f64;
        let age_mean = ages.iter().sum::<f64>() / n;
        let age_var = ages.iter().map(|a| (a - age_mean).powi(2)).sum::<f64>() / n;
        let age_std = if age_var > 0.0 { age_var.sqrt() } else { 1.0 };
        Ok(Self {
            x1,
            x2,
            age_mean,
            age_std,
        })
    }

    /// Standardizes features; ages stay in years.
    pub fn apply(&self, dataset: &Dataset) -> Result<Dataset, DataError> {
        self.check_widths(dataset)?;
        Ok(dataset.map_features(
            |x| self.x1.transform(x),
            |x| match &self.x2 {
                Some(s) => s.transform(x),
                None => x.to_vec(),
            },
        ))
    }

    pub fn invert(&self, dataset: &Dataset) -> Result<Dataset, DataError> {
        self.check_widths(dataset)?;
        Ok(dataset.map_features(
            |x| self.x1.inverse(x),
            |x| match &self.x2 {
                Some(s) => s.inverse(x),
                None => x.to_vec(),
            },
        ))
    }

    fn check_widths(&self, dataset: &Dataset) -> Result<(), DataError> {
        if dataset.m1() != self.x1.width() {
            return Err(DataError::Invalid(format!(
                "modality-1 width {} does not match fitted width {}",
                dataset.m1(),
                self.x1.width()
            )));
        }
        match (dataset.m2(), &self.x2) {
            (Some(m2), Some(s)) if m2 != s.width() => Err(DataError::Invalid(format!(
                "modality-2 width {m2} does not match fitted width {}",
                s.width()
            ))),
            (Some(_), None) => Err(DataError::Invalid(
                "statistics were fitted without modality 2".into(),
            )),
            _ => Ok(()),
        }
    }
}

/// Fits on `dataset` and returns the standardized copy with its statistics.
pub fn standardize(dataset: &Dataset) -> Result<(Dataset, StandardizationStats), DataError> {
    let stats = StandardizationStats::fit(dataset)?;
    Ok((stats.apply(dataset)?, stats))
}

//! Subject records, CSV interchange, standardization, filter feature selection
//! and the planted-factor synthetic generator.

mod io;
mod select;
mod standardize;
mod synthetic;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::Tensor;

pub use io::{load_dataset, parse_dataset, save_dataset, write_dataset};
pub use select::{abs_corr_scores, select_features, tree_importance_scores, FeatureMask, Scorer};
pub use standardize::{standardize, FeatureStats, StandardizationStats};
pub use synthetic::{gen_synthetic, SyntheticGroundTruth, SyntheticSpec};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("row {row}, column {column}: cannot parse '{value}'")]
    Parse {
        row: usize,
        column: String,
        value: String,
    },
    #[error("row {row}: sex must be 0 or 1, found '{value}'")]
    Sex { row: usize, value: String },
    #[error("row {row}: age {age} outside (0, 120)")]
    Age { row: usize, age: f64 },
    #[error("row {row}: duplicate id '{id}'")]
    DuplicateId { row: usize, id: String },
    #[error("header: {0}")]
    Header(String),
    #[error("row {row}: {detail}")]
    Row { row: usize, detail: String },
    #[error("dataset is empty")]
    Empty,
    #[error("{0}")]
    Invalid(String),
    #[error("need at least {needed} records, found {found}")]
    TooFew { needed: usize, found: usize },
    #[error("cannot keep {requested} features from {available}")]
    TooManyFeatures { requested: usize, available: usize },
    #[error("invalid synthetic spec: {0}")]
    Spec(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Sex {
    Female,
    Male,
}

impl Sex {
    /// Female 0, male 1.
    pub fn code(self) -> u8 {
        match self {
            Sex::Female => 0,
            Sex::Male => 1,
        }
    }

    pub fn as_f64(self) -> f64 {
        f64::from(self.code())
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Sex::Female),
            1 => Some(Sex::Male),
            _ => None,
        }
    }
}

impl fmt::Display for Sex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.code())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubjectRecord {
    pub id: String,
    pub sex: Sex,
    /// Years.
    pub age: f64,
    pub x1: Vec<f64>,
    pub x2: Option<Vec<f64>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Synthetic,
    File,
}

/// Immutable collection of subjects with consistent feature widths.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    records: Vec<SubjectRecord>,
    provenance: Provenance,
}

impl Dataset {
    pub fn new(records: Vec<SubjectRecord>, provenance: Provenance) -> Result<Self, DataError> {
        let ds = Self {
            records,
            provenance,
        };
        ds.validate()?;
        Ok(ds)
    }

    fn validate(&self) -> Result<(), DataError> {
        let first = self.records.first().ok_or(DataError::Empty)?;
        let m1 = first.x1.len();
        let m2 = self
            .records
            .iter()
            .find_map(|r| r.x2.as_ref().map(Vec::len));
        for r in &self.records {
            if r.x1.len() != m1 {
                return Err(DataError::Invalid(format!(
                    "subject {}: {} modality-1 features, expected {m1}",
                    r.id,
                    r.x1.len()
                )));
            }
            if let (Some(x2), Some(m2)) = (&r.x2, m2) {
                if x2.len() != m2 {
                    return Err(DataError::Invalid(format!(
                        "subject {}: {} modality-2 features, expected {m2}",
                        r.id,
                        x2.len()
                    )));
                }
            }
            if !(r.age > 0.0 && r.age < 120.0) {
                return Err(DataError::Invalid(format!(
                    "subject {}: age {} outside (0, 120)",
                    r.id, r.age
                )));
            }
        }
        Ok(())
    }

    pub fn records(&self) -> &[SubjectRecord] {
        &self.records
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn m1(&self) -> usize {
        self.records[0].x1.len()
    }

    /// Modality-2 width if any record carries it.
    pub fn m2(&self) -> Option<usize> {
        self.records
            .iter()
            .find_map(|r| r.x2.as_ref().map(Vec::len))
    }

    /// Every record carries modality 2.
    pub fn is_multimodal(&self) -> bool {
        self.records.iter().all(|r| r.x2.is_some())
    }

    pub fn ages(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.age).collect()
    }

    /// Records at `idx`, in that order.
    pub fn subset(&self, idx: &[usize]) -> Result<Self, DataError> {
        Self::new(
            idx.iter().map(|&i| self.records[i].clone()).collect(),
            self.provenance,
        )
    }

    /// Drops modality 2 from every record.
    pub fn to_unimodal(&self) -> Self {
        Self {
            records: self
                .records
                .iter()
                .map(|r| SubjectRecord {
                    x2: None,
                    ..r.clone()
                })
                .collect(),
            provenance: self.provenance,
        }
    }

    pub(crate) fn map_features(
        &self,
        f1: impl Fn(&[f64]) -> Vec<f64>,
        f2: impl Fn(&[f64]) -> Vec<f64>,
    ) -> Self {
        Self {
            records: self
                .records
                .iter()
                .map(|r| SubjectRecord {
                    x1: f1(&r.x1),
                    x2: r.x2.as_deref().map(&f2),
                    ..r.clone()
                })
                .collect(),
            provenance: self.provenance,
        }
    }

    /// Dense design matrices for training and inference.
    pub fn matrices(&self) -> Result<DesignMatrices, DataError> {
        let n = self.len();
        let x1 = Tensor::from_rows(
            &self
                .records
                .iter()
                .map(|r| r.x1.as_slice())
                .collect::<Vec<_>>(),
        )
        .map_err(|e| DataError::Invalid(e.to_string()))?;
        let x2 = if self.is_multimodal() {
            let rows: Vec<&[f64]> = self
                .records
                .iter()
                .map(|r| r.x2.as_deref().unwrap_or_default())
                .collect();
            Some(Tensor::from_rows(&rows).map_err(|e| DataError::Invalid(e.to_string()))?)
        } else {
            None
        };
        Ok(DesignMatrices {
            x1,
            x2,
            sex: Tensor::from_fn(n, 1, |r, _| self.records[r].sex.as_f64()),
            age: Tensor::from_fn(n, 1, |r, _| self.records[r].age),
        })
    }
}

/// Row-aligned matrices: features, sex column (0/1), age column (years).
#[derive(Clone, Debug, PartialEq)]
pub struct DesignMatrices {
    pub x1: Tensor,
    pub x2: Option<Tensor>,
    pub sex: Tensor,
    pub age: Tensor,
}

impl DesignMatrices {
    pub fn len(&self) -> usize {
        self.x1.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.x1.rows() == 0
    }

    pub fn select(&self, idx: &[usize]) -> Self {
        Self {
            x1: self.x1.select_rows(idx),
            x2: self.x2.as_ref().map(|x| x.select_rows(idx)),
            sex: self.sex.select_rows(idx),
            age: self.age.select_rows(idx),
        }
    }

    pub fn without_modality2(&self) -> Self {
        Self {
            x2: None,
            ..self.clone()
        }
    }
}

#[cfg(test)]
pub(crate) fn toy_record(
    id: &str,
    sex: Sex,
    age: f64,
    x1: &[f64],
    x2: Option<&[f64]>,
) -> SubjectRecord {
    SubjectRecord {
        id: id.into(),
        sex,
        age,
        x1: x1.to_vec(),
        x2: x2.map(<[f64]>::to_vec),
    }
}

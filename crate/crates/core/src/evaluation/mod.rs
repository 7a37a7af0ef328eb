//! Accuracy metrics, sex and age-group breakdowns, cross-validation and the
//! paired variant ablation.

mod ablation;
mod metrics;

use thiserror::Error;

use crate::data::DataError;
use crate::training::TrainError;

pub use ablation::{
    dataset_digest, evaluate_cv, evaluate_holdout, make_splits, render_table, run_ablation,
    split_train_seed, AblationTable, FoldResult, Protocol, SeedResult, Split, VariantResult,
};
pub use metrics::{
    age_bin, compute_metrics, group_breakdown, GroupMetrics, MetricsReport, AGE_BINS,
};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("{targets} targets but {predictions} predictions")]
    Length { targets: usize, predictions: usize },
    #[error("no subjects to evaluate")]
    Empty,
    #[error("non-finite value {0} among targets or predictions")]
    NonFinite(f64),
    #[error("{0}")]
    Protocol(String),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Data(#[from] DataError),
}

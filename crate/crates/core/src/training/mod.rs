//! Adam, the two-phase adversarial update, plateau scheduling with early
//! stopping, data splits and the end-to-end fit/predict pipeline.

mod adam;
mod fit;
mod pipeline;
mod schedule;
mod step;
mod verify;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::AutodiffError;
use crate::data::{DataError, Scorer};
use crate::losses::{LossError, LossWeights};
use crate::networks::{Architecture, Mode, NetworkError, Variant};

pub use adam::AdamState;
pub use fit::{
    fit_matrices, fit_with_validator, initial_bundle, kfold_split, mae, stratified_split,
    EpochRecord, FitOutcome, FoldAssignment, StopReason, TrainHistory,
};
pub use pipeline::{predict_dataset, prepare, train_model, Prepared, TrainedModel};
pub use schedule::{PlateauScheduler, ScheduleAction};
pub use step::{
    discriminator_phase, encode_batch, generator_objective, generator_phase, latent_codes,
    objective_value, predict, train_step, train_step_multimodal, train_step_unimodal, BatchVars,
    Encodings, GeneratorGraph, LatentTensors, Optimizers, StepOutcome, StepSettings, Stochastic,
};
pub use verify::{
    gradcheck_config, gradcheck_objective, GradCheckReport, GRADCHECK_BATCH, GRADCHECK_STEP,
};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("modality 2 is required here but missing")]
    MissingModality,
    #[error("non-finite gradient in parameter tensor {tensor}, element {index}: {value}")]
    NonFiniteGradient {
        tensor: usize,
        index: usize,
        value: f64,
    },
    #[error("non-finite loss: {0}")]
    NonFiniteLoss(String),
    #[error("optimizer: {0}")]
    Optimizer(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
}

/// Hidden widths and latent sizes; input widths come from the data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ArchConfig {
    pub shared_dim: usize,
    pub dist_dim: usize,
    pub enc_hidden: Vec<usize>,
    pub dec_hidden: Vec<usize>,
    pub disc_hidden: Vec<usize>,
    pub reg_hidden: Vec<usize>,
    pub sex_hidden: Vec<usize>,
}

impl Default for ArchConfig {
    fn default() -> Self {
        let a = Architecture::new(1, None);
        Self {
            shared_dim: a.shared_dim,
            dist_dim: a.dist_dim,
            enc_hidden: a.enc_hidden,
            dec_hidden: a.dec_hidden,
            disc_hidden: a.disc_hidden,
            reg_hidden: a.reg_hidden,
            sex_hidden: a.sex_hidden,
        }
    }
}

impl ArchConfig {
    pub fn architecture(&self, m1: usize, m2: Option<usize>) -> Architecture {
        Architecture {
            m1,
            m2,
            shared_dim: self.shared_dim,
            dist_dim: self.dist_dim,
            enc_hidden: self.enc_hidden.clone(),
            dec_hidden: self.dec_hidden.clone(),
            disc_hidden: self.disc_hidden.clone(),
            reg_hidden: self.reg_hidden.clone(),
            sex_hidden: self.sex_hidden.clone(),
        }
    }
}

/// Filter selection applied to raw features before standardization.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SelectionConfig {
    /// Modality-1 features kept; capped at the available width.
    pub m1: usize,
    pub m2: usize,
    pub scorer: Scorer,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self {
            m1: 128,
            m2: 128,
            scorer: Scorer::AbsCorr,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub lr: f64,
    pub lr_patience: usize,
    pub lr_factor: f64,
    pub early_stop_patience: usize,
    pub max_epochs: usize,
    pub seed: u64,
    pub weights: LossWeights,
    pub variant: Variant,
    pub mode: Mode,
    pub val_fraction: f64,
    pub weight_decay: f64,
    pub dropout: f64,
    /// Add self-reconstruction of both modalities to the multimodal objective.
    pub self_recon: bool,
    pub arch: ArchConfig,
    pub selection: SelectionConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 20,
            lr: 0.001,
            lr_patience: 9,
            lr_factor: 0.25,
            early_stop_patience: 18,
            max_epochs: 200,
            seed: 0,
            weights: LossWeights::default(),
            variant: Variant::SaAvae,
            mode: Mode::Multimodal,
            val_fraction: 0.15,
            weight_decay: 1e-5,
            dropout: 0.1,
            self_recon: false,
            arch: ArchConfig::default(),
            selection: SelectionConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: String| Err(TrainError::Config(m));
        if self.batch_size < 2 {
            return bad(format!(
                "batch_size must be at least 2, got {}",
                self.batch_size
            ));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad(format!("lr must be positive, got {}", self.lr));
        }
        if !(self.lr_factor > 0.0 && self.lr_factor < 1.0) {
            return bad(format!(
                "lr_factor must be in (0, 1), got {}",
                self.lr_factor
            ));
        }
        if self.lr_patience == 0 || self.early_stop_patience == 0 {
            return bad("patience values must be at least 1".into());
        }
        if !(self.val_fraction > 0.0 && self.val_fraction < 1.0) {
            return bad(format!(
                "val_fraction must be in (0, 1), got {}",
                self.val_fraction
            ));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad(format!(
                "weight_decay must be non-negative, got {}",
                self.weight_decay
            ));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout must be in [0, 1), got {}", self.dropout));
        }
        if self.arch.shared_dim == 0 || self.arch.dist_dim == 0 {
            return bad("latent widths must be positive".into());
        }
        if self.selection.m1 == 0 || self.selection.m2 == 0 {
            return bad("feature counts must be positive".into());
        }
        self.weights.validate()?;
        Ok(())
    }
}

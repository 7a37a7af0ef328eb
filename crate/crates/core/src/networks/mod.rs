//! Encoders, decoders, discriminator and regressor, plus the latent-code plumbing
//! between them.
//!
//! Every encoder emits `shared_dim + 2 · dist_dim` units, read as a deterministic
//! shared code followed by the mean and log-variance of the distinct code.

mod checkpoint;
mod mlp;
mod model;

use thiserror::Error;

use crate::autodiff::AutodiffError;

pub use checkpoint::{Checkpoint, CHECKPOINT_FORMAT};
pub use mlp::{stack, validate_specs, Activation, BoundMlp, Dense, Dropout, LayerSpec, Mlp};
pub use model::{
    assemble_m, decode, discriminate, encode, init_params, regress, reparameterize, AgeScale,
    Architecture, BoundBundle, EncoderOutput, LatentCode, Mode, ModelBundle, Variant, LOGVAR_MAX,
    LOGVAR_MIN,
};

#[derive(Debug, Error)]
pub enum NetworkError {
    #[error("inconsistent layer specs: {0}")]
    InconsistentSpecs(String),
    #[error("{what}: expected width {expected}, found {found}")]
    DimMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("{what}: shapes {left:?} and {right:?} differ")]
    ShapeMismatch {
        what: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("unknown variant '{0}' (expected AE, AAE, VAE, AVAE, SA-AVAE or M-AVAE)")]
    UnknownVariant(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

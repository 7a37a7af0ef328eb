//! Sex-aware adversarial variational autoencoder for brain-age regression from
//! one or two feature modalities, built on a small reverse-mode autodiff engine.

pub mod autodiff;
pub mod cli;
pub mod data;
pub mod evaluation;
pub mod losses;
pub mod networks;
pub mod training;

/// Seedable generator used everywhere randomness enters.
pub type SeededRng = rand_chacha::ChaCha8Rng;

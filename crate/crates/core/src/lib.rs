//! Propaganda span identification and technique classification.
//!
//! Modules, bottom up:
//! - [`autograd`]: dense reverse-mode autodiff, losses, Adam, checkpoints
//! - [`corpus`]: task file formats, offset-exact tokenization, tag projection
//! - [`encoder`]: small transformer encoder with masked-LM pretraining
//! - [`si`]: span identification heads (linear, CRF, autoregressive tagger)
//! - [`tc`]: marker-token technique classification and ensembling
//! - [`eval`]: overlap-based SI scoring and micro-averaged TC F
//! - [`presets`]: named model configurations
//! - [`saved`]: checkpoints that rebuild either model

pub mod autograd;
pub mod corpus;
pub mod encoder;
pub mod eval;
pub mod error;
pub mod presets;
pub mod saved;
pub mod si;
pub mod tc;

pub use error::{Error, Result};

/// The single generator type behind every seeded random draw.
pub type SeededRng = rand_chacha::ChaCha8Rng;

//! Text-guided latent diffusion feature augmentation for skeleton-based
//! action recognition.
//!
//! A graph-convolutional encoder maps skeleton clips to feature vectors; a
//! conditional denoiser over those vectors is pretrained with a
//! reconstruction + skeleton/label contrastive objective and then fine-tuned
//! jointly with a freshly initialized encoder, whose classifier sees both the
//! real and the generated features. Only the encoder and classifier are used
//! at inference time.

pub mod checkpoint;
pub mod config;
pub mod dataset;
pub mod diffusion;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod gradcheck;
pub mod model;
pub mod nn;
pub mod objectives;
pub mod optim;
pub mod par;
pub mod text;
pub mod train;

pub use error::{Error, Result};

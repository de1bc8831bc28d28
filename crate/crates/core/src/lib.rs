//! Deep feedforward classifiers initialized by stacked denoising autoencoder
//! pre-training, the classical baselines they are compared against, and a
//! reproducible grid-search harness.

pub mod autoencoder;
pub mod baselines;
pub mod data;
pub mod error;
pub mod exec;
pub mod linalg;
pub mod model_file;
pub mod nn;
pub mod sda;
pub mod search;

pub use error::{Error, Result};

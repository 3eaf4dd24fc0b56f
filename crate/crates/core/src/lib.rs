//! Concatenated-inputs augmentation and double-descent experiments at desk
//! scale: data generators, minimum-norm least squares, a small MLP trainer,
//! a KL bias-variance decomposition and reproducible sweeps.

pub mod augment;
pub mod biasvar;
pub mod datagen;
pub mod error;
pub mod linreg;
pub mod nnet;
pub mod rng;
pub mod sweep;

pub use error::{Error, Result};
pub use rng::{mix, Rng};

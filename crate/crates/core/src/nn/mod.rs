//! Differentiable building blocks with explicit backward passes.
//!
//! Every layer is generic over [`Scalar`] so that the same network can run in
//! `f32` for training and in `f64` for finite-difference gradient checks.

pub mod adam;
pub mod batchnorm;
pub mod dense;
pub mod embedding;
pub mod gradcheck;
pub mod lstm;
pub mod ops;
pub mod param;
pub mod pool;
mod scalar;

use serde::{Deserialize, Serialize};

pub use adam::{adam_step, AdamConfig};
pub use batchnorm::{BatchNorm, RunningStats};
pub use dense::Dense;
pub use embedding::Embedding;
pub use lstm::{BiLstm, LstmCell};
pub use ops::cosine;
pub use param::{Buffer, Init, Module, Parameter};
pub use scalar::Scalar;

/// Whether batch normalization uses batch statistics (and updates its
/// running averages) or the running averages alone.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Train,
    Infer,
}

//! Minimal dense numeric core: tensors, layers with hand-written backward
//! passes, Adam, checkpoints and finite-difference gradient checks.

mod adam;
mod encoder;
mod gradcheck;
mod layers;
pub mod ops;
mod params;
mod tensor;

pub use adam::AdamState;
pub use encoder::{join_cols, split_cols, Encoder, EncoderCache, EncoderKind, EncoderSpec, InputShape};
pub use gradcheck::{grad_check, relative_error};
pub use layers::{Conv3, Dense};
pub use params::{Init, ParamSet, Role};
pub use tensor::Tensor;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NetError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

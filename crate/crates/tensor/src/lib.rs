//! Dense `f64` tensors with tape-based reverse-mode differentiation.
//!
//! Pure kernels (`ops::*::<fn>`) work on [`Tensor`] values and are safe to call
//! from any thread. Differentiable versions are methods on [`Var`], which
//! records gradient rules on a single-owner [`Tape`].

pub mod adam;
mod error;
pub mod gradcheck;
pub mod ops;
mod tape;
mod tensor;

pub use adam::{adam_step, AdamState};
pub use error::{Result, TensorError};
pub use ops::activation::Activation;
pub use ops::conv::ConvRank;
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;

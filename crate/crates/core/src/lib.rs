//! Continuous spectral reconstruction from RGB or low-band spectral images.

mod error;
pub mod eval;
pub mod model;
pub mod synth;
pub mod train;

pub use error::{NesrError, Result};

//! Optimization loop, learning-rate schedule and checkpoints.

pub mod checkpoint;
pub mod config;
pub mod trainer;

pub use checkpoint::{Checkpoint, RngState};
pub use config::{lr_at, BandSampling, InputMode, TrainConfig};
pub use trainer::{render_input, train, Trainer, RGB_SOURCE_BANDS};

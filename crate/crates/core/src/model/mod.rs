//! The reconstruction network and its loss.

pub mod config;
pub mod coords;
pub mod network;
pub mod weights;

pub use config::{AttentionVariant, ModelConfig, HEAD_DIMS};
pub use coords::{normalize_wavelength, normalize_wavelengths, CoordinateGrid};
pub use network::{
    attention_maps, decode, decode_var, embed_tokens, encode, forward, forward_var, latent_codes, mrae_loss, nam_forward,
    spi_branches, spi_forward,
};
pub use weights::{Affine, AttentionWeights, Conv, EncoderWeights, HeadWeights, ModelWeights, NamWeights, SpiWeights};

use serde::{Deserialize, Serialize};

use crate::error::{NesrError, Result};

/// Hidden widths of the per-voxel decoder.
pub const HEAD_DIMS: [usize; 4] = [128, 128, 256, 256];
pub const RESIDUAL_BLOCKS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttentionVariant {
    /// `C×C` attention over channels, pooled over every voxel.
    SpatialSpectral,
    /// Attention across bands at each pixel.
    Spectral,
    /// Attention across pixels within each band.
    Spatial,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// 3 for RGB input, the band count for spectral input.
    pub in_channels: usize,
    pub encoder_channels: usize,
    pub embed_channels: usize,
    pub enable_spi: bool,
    pub enable_nam: bool,
    pub attention_variant: AttentionVariant,
    pub leaky_slope: f64,
    /// Divide the `C×C` Gram logits by the token count.
    pub normalize_gram: bool,
    /// Append normalized row/column coordinates to every token. Speculative;
    /// off by default.
    pub spatial_coords: bool,
    /// Tokens per decoder chunk during inference.
    pub decode_chunk: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            in_channels: 3,
            encoder_channels: 32,
            embed_channels: 32,
            enable_spi: true,
            enable_nam: true,
            attention_variant: AttentionVariant::SpatialSpectral,
            leaky_slope: 0.01,
            normalize_gram: true,
            spatial_coords: false,
            decode_chunk: 8192,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(NesrError::Config(what.to_string()));
        if self.in_channels == 0 {
            return bad("in_channels must be at least 1");
        }
        if self.encoder_channels == 0 || self.embed_channels == 0 {
            return bad("encoder_channels and embed_channels must be at least 1");
        }
        if !(self.leaky_slope.is_finite() && self.leaky_slope >= 0.0) {
            return bad("leaky_slope must be a finite nonnegative number");
        }
        if self.decode_chunk == 0 {
            return bad("decode_chunk must be at least 1");
        }
        Ok(())
    }

    /// Width of a token before the fusion layer.
    pub fn token_width(&self) -> usize {
        self.embed_channels + if self.spatial_coords { 3 } else { 1 }
    }
}

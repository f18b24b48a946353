//! Forward pass: encoder, profile interpolation, attention mapping and the
//! per-voxel decoder.
//!
//! Tokens are ordered band-major: token `n` is voxel `(b, y, x)` with
//! `n = (b·H + y)·W + x`.

use nesr_tensor::ops::{attention_weights, matmul, softmax};
use nesr_tensor::{Activation, ConvRank, Tape, Tensor, Var};

use crate::error::{NesrError, Result};
use crate::model::config::{AttentionVariant, ModelConfig};
use crate::model::coords::{normalize_position, normalize_wavelengths, CoordinateGrid};
use crate::model::weights::{Affine, AttentionWeights, Conv, EncoderWeights, HeadWeights, ModelWeights, NamWeights, SpiWeights};
use crate::synth::image::SpectralImage;
use crate::synth::scene::MIN_EXTENT;

fn conv<'t>(x: &Var<'t>, c: &Conv<Var<'t>>, rank: ConvRank) -> Result<Var<'t>> {
    let k = c.kernels.shape()[2];
    Ok(x.convolve(&c.kernels, &c.bias, rank, (k - 1) / 2)?)
}

fn affine<'t>(x: &Var<'t>, a: &Affine<Var<'t>>) -> Result<Var<'t>> {
    Ok(x.affine(&a.weight, &a.bias)?)
}

/// `in_channels×H×W` → `F×H×W`.
pub fn encode<'t>(input: &Var<'t>, w: &EncoderWeights<Var<'t>>, config: &ModelConfig) -> Result<Var<'t>> {
    let shape = input.shape();
    if shape.len() != 3 || shape[0] != config.in_channels {
        return Err(NesrError::Config(format!(
            "input {shape:?} does not match in_channels = {}",
            config.in_channels
        )));
    }
    if shape[1] < MIN_EXTENT || shape[2] < MIN_EXTENT {
        return Err(NesrError::Domain(format!(
            "input must be at least {MIN_EXTENT}×{MIN_EXTENT}, got {}×{}",
            shape[1], shape[2]
        )));
    }
    let slope = config.leaky_slope;
    let mut x = conv(input, &w.stem, ConvRank::Two)?.leaky_relu(slope);
    for [c1, c2] in &w.blocks {
        let inner = conv(&x, c1, ConvRank::Two)?.leaky_relu(slope);
        x = x.add(&conv(&inner, c2, ConvRank::Two)?)?.leaky_relu(slope);
    }
    Ok(x)
}

/// The two profile branches before fusion, each `λ_out×H×W`.
///
/// The vertical branch resizes the `H×F` profile of every column, the
/// horizontal branch the `W×F` profile of every row. Both resize only the
/// feature axis, so they agree voxel for voxel.
pub fn spi_branches<'t>(m_in: &Var<'t>, bands: usize) -> Result<(Var<'t>, Var<'t>)> {
    if bands < 1 {
        return Err(NesrError::Domain("λ_out must be at least 1".into()));
    }
    let vertical = m_in.permute(&[2, 1, 0])?.resize_linear(bands)?.permute(&[2, 1, 0])?;
    let horizontal = m_in.permute(&[1, 2, 0])?.resize_linear(bands)?.permute(&[2, 0, 1])?;
    Ok((vertical, horizontal))
}

/// `F×H×W` → `C×λ_out×H×W`.
pub fn spi_forward<'t>(m_in: &Var<'t>, bands: usize, w: &SpiWeights<Var<'t>>, config: &ModelConfig) -> Result<Var<'t>> {
    if bands < 1 {
        return Err(NesrError::Domain("λ_out must be at least 1".into()));
    }
    let (h, wd) = (m_in.shape()[1], m_in.shape()[2]);
    let slope = config.leaky_slope;
    match w {
        SpiWeights::Interpolate { fuse, refine } => {
            let (vertical, horizontal) = spi_branches(m_in, bands)?;
            let stacked = Var::concat(
                &[&vertical.reshape(&[1, bands, h, wd])?, &horizontal.reshape(&[1, bands, h, wd])?],
                0,
            )?;
            let x = conv(&stacked, fuse, ConvRank::Three)?.leaky_relu(slope);
            Ok(conv(&x, refine, ConvRank::Three)?.leaky_relu(slope))
        }
        SpiWeights::Replicate { project } => {
            let f = m_in.shape()[0];
            let replicated = m_in.reshape(&[f, 1, h, wd])?.broadcast_axis(1, bands)?;
            conv(&replicated, project, ConvRank::Three)
        }
    }
}

/// Per-voxel coordinates appended to every token: the normalized wavelength,
/// then (when enabled) row and column.
fn coordinate_columns(grid: &CoordinateGrid, config: &ModelConfig) -> Result<Tensor> {
    let (h, w) = (grid.height(), grid.width());
    let n = grid.normalized.len();
    if !config.spatial_coords {
        return Ok(grid.normalized.reshape(&[n, 1])?);
    }
    let mut data = Vec::with_capacity(n * 3);
    for (i, &x) in grid.normalized.data().iter().enumerate() {
        let pixel = i % (h * w);
        data.extend_from_slice(&[x, normalize_position(pixel / w, h), normalize_position(pixel % w, w)]);
    }
    Ok(Tensor::new(&[n, 3], data)?)
}

/// Fused token embedding `v` (`N×C`).
pub fn embed_tokens<'t>(m_out: &Var<'t>, grid: &CoordinateGrid, token: &Affine<Var<'t>>, config: &ModelConfig) -> Result<Var<'t>> {
    let s = m_out.shape();
    if s.len() != 4 || s[1..] != *grid.normalized.shape() {
        return Err(NesrError::Dimension(format!(
            "features {s:?} do not match coordinate grid {:?}",
            grid.normalized.shape()
        )));
    }
    let (c, n) = (s[0], s[1] * s[2] * s[3]);
    let features = m_out.reshape(&[c, n])?.transpose()?;
    let coords = m_out.tape().constant(coordinate_columns(grid, config)?);
    let tokens = Var::concat(&[&features, &coords], 1)?;
    Ok(affine(&tokens, token)?.leaky_relu(config.leaky_slope))
}

fn check_variant(config: &ModelConfig, attention: Option<&AttentionWeights<Var<'_>>>) -> Result<()> {
    match (config.enable_nam, attention.is_some()) {
        (true, false) => Err(NesrError::Config("enable_nam is set but the weights carry no attention".into())),
        (false, true) => Err(NesrError::Config("enable_nam is off but the weights carry attention".into())),
        _ => Ok(()),
    }
}

/// Raw attention output `V·A` (`N×C`) for the configured variant.
fn attend<'t>(v: &Var<'t>, a: &AttentionWeights<Var<'t>>, grid: &CoordinateGrid, config: &ModelConfig) -> Result<Var<'t>> {
    let q = v.matmul(&a.query)?;
    let k = v.matmul(&a.key)?;
    let val = v.matmul(&a.value)?;
    let (n, c) = (v.shape()[0], v.shape()[1]);
    let (bands, plane) = (grid.bands(), grid.height() * grid.width());
    match config.attention_variant {
        AttentionVariant::SpatialSpectral => {
            let mut logits = q.transpose()?.matmul(&k)?;
            if config.normalize_gram {
                logits = logits.scale(1.0 / n as f64);
            }
            Ok(val.matmul(&logits.softmax()?)?)
        }
        AttentionVariant::Spectral => {
            let per_pixel = |x: &Var<'t>| -> Result<Var<'t>> { Ok(x.reshape(&[bands, plane, c])?.permute(&[1, 0, 2])?) };
            let out = per_pixel(&q)?.attention(&per_pixel(&k)?, &per_pixel(&val)?, 1.0)?;
            Ok(out.permute(&[1, 0, 2])?.reshape(&[n, c])?)
        }
        AttentionVariant::Spatial => {
            let per_band = |x: &Var<'t>| -> Result<Var<'t>> { Ok(x.reshape(&[bands, plane, c])?) };
            let out = per_band(&q)?.attention(&per_band(&k)?, &per_band(&val)?, 1.0)?;
            Ok(out.reshape(&[n, c])?)
        }
    }
}

/// `C×λ_out×H×W` features → `v*` for the requested tokens (all when `query`
/// is `None`).
pub fn nam_forward<'t>(
    m_out: &Var<'t>,
    grid: &CoordinateGrid,
    w: &NamWeights<Var<'t>>,
    config: &ModelConfig,
    query: Option<&[usize]>,
) -> Result<Var<'t>> {
    check_variant(config, w.attention.as_ref())?;
    let v = embed_tokens(m_out, grid, &w.token, config)?;
    let select = |x: Var<'t>| -> Result<Var<'t>> {
        match query {
            Some(idx) => Ok(x.gather_rows(idx)?),
            None => Ok(x),
        }
    };
    match &w.attention {
        None => select(v),
        Some(a) => {
            let mixed = select(attend(&v, a, grid, config)?)?;
            Ok(affine(&mixed, &a.output)?.leaky_relu(config.leaky_slope))
        }
    }
}

/// Attention weight matrices for inspection: `1×C×C` for the
/// spatial-spectral variant, `HW×λ×λ` for spectral and `λ×HW×HW` for spatial.
pub fn attention_maps(v: &Tensor, a: &AttentionWeights<Tensor>, grid: &CoordinateGrid, config: &ModelConfig) -> Result<Tensor> {
    let q = matmul(v, &a.query)?;
    let k = matmul(v, &a.key)?;
    let (n, c) = (v.shape()[0], v.shape()[1]);
    let (bands, plane) = (grid.bands(), grid.height() * grid.width());
    match config.attention_variant {
        AttentionVariant::SpatialSpectral => {
            let mut logits = matmul(&q.permute(&[1, 0])?, &k)?;
            if config.normalize_gram {
                logits = logits.scale(1.0 / n as f64);
            }
            Ok(softmax(&logits)?.reshape(&[1, c, c])?)
        }
        AttentionVariant::Spectral => {
            let per_pixel = |x: &Tensor| -> Result<Tensor> { Ok(x.reshape(&[bands, plane, c])?.permute(&[1, 0, 2])?) };
            Ok(attention_weights(&per_pixel(&q)?, &per_pixel(&k)?, 1.0)?)
        }
        AttentionVariant::Spatial => Ok(attention_weights(
            &q.reshape(&[bands, plane, c])?,
            &k.reshape(&[bands, plane, c])?,
            1.0,
        )?),
    }
}

/// Per-token intensity (`N×1`).
pub fn decode_var<'t>(v: &Var<'t>, head: &HeadWeights<Var<'t>>) -> Result<Var<'t>> {
    check_head(v.shape(), &head.layers[0].weight.shape()[0])?;
    let last = head.layers.len() - 1;
    let mut x = v.clone();
    for (i, layer) in head.layers.iter().enumerate() {
        x = affine(&x, layer)?;
        if i < last {
            x = x.relu();
        }
    }
    Ok(x)
}

fn check_head(shape: &[usize], width: &usize) -> Result<()> {
    if shape.len() != 2 || shape[1] != *width {
        return Err(NesrError::Dimension(format!("tokens {shape:?} do not fit a head of width {width}")));
    }
    Ok(())
}

/// Decoder on plain tensors, `chunk` tokens at a time.
pub fn decode(v: &Tensor, head: &HeadWeights<Tensor>, chunk: usize) -> Result<Tensor> {
    check_head(v.shape(), &head.layers[0].weight.shape()[0])?;
    let (n, c) = (v.shape()[0], v.shape()[1]);
    let last = head.layers.len() - 1;
    let mut out = Vec::with_capacity(n);
    for start in (0..n).step_by(chunk.max(1)) {
        let rows = chunk.min(n - start);
        let mut x = Tensor::new(&[rows, c], v.data()[start * c..(start + rows) * c].to_vec())?;
        for (i, layer) in head.layers.iter().enumerate() {
            x = nesr_tensor::ops::add_bias(&matmul(&x, &layer.weight)?, &layer.bias, 1)?;
            if i < last {
                x = nesr_tensor::ops::activate(&x, Activation::Relu);
            }
        }
        out.extend_from_slice(x.data());
    }
    Ok(Tensor::new(&[n, 1], out)?)
}

/// Differentiable prediction for the requested tokens (`N_q×1`).
pub fn forward_var<'t>(
    input: &Var<'t>,
    grid: &CoordinateGrid,
    config: &ModelConfig,
    w: &ModelWeights<Var<'t>>,
    query: Option<&[usize]>,
) -> Result<Var<'t>> {
    let m_in = encode(input, &w.encoder, config)?;
    let m_out = spi_forward(&m_in, grid.bands(), &w.spi, config)?;
    let v = nam_forward(&m_out, grid, &w.nam, config, query)?;
    decode_var(&v, &w.head)
}

/// `v*` for every voxel without recording gradients.
pub fn latent_codes(input: &Tensor, grid: &CoordinateGrid, config: &ModelConfig, weights: &ModelWeights<Tensor>) -> Result<Tensor> {
    let tape = Tape::new();
    let w = weights.map(|_, t| tape.constant(t.clone()));
    let x = tape.constant(input.clone());
    let m_in = encode(&x, &w.encoder, config)?;
    let m_out = spi_forward(&m_in, grid.bands(), &w.spi, config)?;
    Ok(nam_forward(&m_out, grid, &w.nam, config, None)?.to_tensor())
}

/// Full prediction at `wavelengths`; the band count is free.
pub fn forward(input: &Tensor, wavelengths: &[f64], config: &ModelConfig, weights: &ModelWeights<Tensor>) -> Result<SpectralImage> {
    if input.rank() != 3 {
        return Err(NesrError::Config(format!("input must be channels×H×W, got {:?}", input.shape())));
    }
    let (h, w) = (input.shape()[1], input.shape()[2]);
    let grid = normalize_wavelengths(wavelengths, h, w)?;
    let v = latent_codes(input, &grid, config, weights)?;
    let y = decode(&v, &weights.head, config.decode_chunk)?;
    SpectralImage::new(wavelengths.to_vec(), y.reshape(&[wavelengths.len(), h, w])?)
}

/// `mean(|Y − GT| / (GT + ε))`.
pub fn mrae_loss(prediction: &Tensor, ground_truth: &Tensor, eps: f64) -> Result<f64> {
    if prediction.shape() != ground_truth.shape() {
        return Err(NesrError::Dimension(format!(
            "prediction {:?} vs ground truth {:?}",
            prediction.shape(),
            ground_truth.shape()
        )));
    }
    Ok(nesr_tensor::ops::mean_relative_abs_error(prediction, ground_truth, eps)?)
}

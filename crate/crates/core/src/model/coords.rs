use nesr_tensor::Tensor;

use crate::error::Result;
use crate::synth::bands::{validate_wavelengths, LAMBDA_MAX, LAMBDA_MIN};

/// Requested wavelengths and their normalized coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct CoordinateGrid {
    pub wavelengths: Vec<f64>,
    /// `λ_out×H×W`, constant over each band.
    pub normalized: Tensor,
}

impl CoordinateGrid {
    pub fn bands(&self) -> usize {
        self.wavelengths.len()
    }

    pub fn height(&self) -> usize {
        self.normalized.shape()[1]
    }

    pub fn width(&self) -> usize {
        self.normalized.shape()[2]
    }
}

/// `2(λ−400)/300 − 1` per wavelength.
pub fn normalize_wavelength(wavelength: f64) -> f64 {
    2.0 * (wavelength - LAMBDA_MIN) / (LAMBDA_MAX - LAMBDA_MIN) - 1.0
}

pub fn normalize_wavelengths(wavelengths: &[f64], height: usize, width: usize) -> Result<CoordinateGrid> {
    validate_wavelengths(wavelengths)?;
    let plane = height * width;
    let mut data = Vec::with_capacity(wavelengths.len() * plane);
    for &w in wavelengths {
        data.extend(std::iter::repeat_n(normalize_wavelength(w), plane));
    }
    Ok(CoordinateGrid {
        wavelengths: wavelengths.to_vec(),
        normalized: Tensor::new(&[wavelengths.len(), height, width], data)?,
    })
}

/// Pixel centres mapped to [−1, 1]; a single row or column sits at 0.
pub fn normalize_position(index: usize, extent: usize) -> f64 {
    if extent <= 1 {
        0.0
    } else {
        2.0 * index as f64 / (extent - 1) as f64 - 1.0
    }
}

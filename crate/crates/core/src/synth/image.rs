use nesr_tensor::Tensor;

use crate::error::{NesrError, Result};
use crate::synth::bands::validate_wavelengths;

/// A `bands×H×W` volume plus the wavelength (nm) of each band.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralImage {
    wavelengths: Vec<f64>,
    volume: Tensor,
}

impl SpectralImage {
    pub fn new(wavelengths: Vec<f64>, volume: Tensor) -> Result<Self> {
        validate_wavelengths(&wavelengths)?;
        if volume.rank() != 3 || volume.shape()[0] != wavelengths.len() {
            return Err(NesrError::Dimension(format!(
                "volume {:?} does not match {} wavelengths",
                volume.shape(),
                wavelengths.len()
            )));
        }
        Ok(SpectralImage { wavelengths, volume })
    }

    pub fn wavelengths(&self) -> &[f64] {
        &self.wavelengths
    }

    pub fn volume(&self) -> &Tensor {
        &self.volume
    }

    pub fn into_volume(self) -> Tensor {
        self.volume
    }

    pub fn bands(&self) -> usize {
        self.wavelengths.len()
    }

    pub fn height(&self) -> usize {
        self.volume.shape()[1]
    }

    pub fn width(&self) -> usize {
        self.volume.shape()[2]
    }

    /// One band as a row-major `H×W` slice.
    pub fn band(&self, index: usize) -> &[f64] {
        let plane = self.height() * self.width();
        &self.volume.data()[index * plane..(index + 1) * plane]
    }
}

//! Interpolation baselines.

use nesr_tensor::Tensor;

use crate::error::{NesrError, Result};
use crate::synth::bands::validate_wavelengths;
use crate::synth::image::SpectralImage;

/// Wavelengths (nm) assigned to the B, G and R channels.
pub const RGB_ANCHORS: [f64; 3] = [450.0, 550.0, 600.0];

/// Piecewise-linear interpolation of per-pixel samples at `anchors` onto
/// `wavelengths`, held constant outside the anchor range.
fn interpolate(anchors: &[f64], planes: &[&[f64]], wavelengths: &[f64], height: usize, width: usize) -> Result<SpectralImage> {
    let plane = height * width;
    let last = anchors.len() - 1;
    let mut data = Vec::with_capacity(wavelengths.len() * plane);
    for &w in wavelengths {
        let (i0, i1, t) = if w <= anchors[0] {
            (0, 0, 0.0)
        } else if w >= anchors[last] {
            (last, last, 0.0)
        } else {
            let i = anchors.partition_point(|&a| a <= w) - 1;
            (i, i + 1, (w - anchors[i]) / (anchors[i + 1] - anchors[i]))
        };
        if t == 0.0 {
            data.extend_from_slice(planes[i0]);
        } else {
            data.extend(planes[i0].iter().zip(planes[i1]).map(|(a, b)| (1.0 - t) * a + t * b));
        }
    }
    SpectralImage::new(wavelengths.to_vec(), Tensor::new(&[wavelengths.len(), height, width], data)?)
}

/// Spectral interpolation of an R, G, B image.
pub fn baseline_bi(rgb: &Tensor, wavelengths: &[f64]) -> Result<SpectralImage> {
    if rgb.rank() != 3 || rgb.shape()[0] != 3 {
        return Err(NesrError::Dimension(format!("expected a 3×H×W image, got {:?}", rgb.shape())));
    }
    validate_wavelengths(wavelengths)?;
    let (h, w) = (rgb.shape()[1], rgb.shape()[2]);
    let plane = h * w;
    let channel = |c: usize| &rgb.data()[c * plane..(c + 1) * plane];
    interpolate(&RGB_ANCHORS, &[channel(2), channel(1), channel(0)], wavelengths, h, w)
}

/// Spectral interpolation of a low-band spectral image.
pub fn spectral_bi(input: &SpectralImage, wavelengths: &[f64]) -> Result<SpectralImage> {
    validate_wavelengths(wavelengths)?;
    let planes: Vec<&[f64]> = (0..input.bands()).map(|b| input.band(b)).collect();
    interpolate(input.wavelengths(), &planes, wavelengths, input.height(), input.width())
}

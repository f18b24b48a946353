use nesr_tensor::Tensor;
use serde::{Deserialize, Serialize};

use crate::error::{NesrError, Result};
use crate::synth::image::SpectralImage;

/// One Gaussian sensitivity curve per channel, in R, G, B order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraResponse {
    pub peaks_nm: [f64; 3],
    /// Standard deviation of each curve, nm.
    pub width_nm: f64,
}

impl Default for CameraResponse {
    fn default() -> Self {
        CameraResponse {
            peaks_nm: [600.0, 550.0, 450.0],
            width_nm: 40.0,
        }
    }
}

pub type ChannelWeights = [Vec<f64>; 3];

impl CameraResponse {
    /// Per-channel weights over `wavelengths`, each renormalized to sum to 1.
    pub fn weights(&self, wavelengths: &[f64]) -> Result<ChannelWeights> {
        let channel = |peak: f64| -> Result<Vec<f64>> {
            let raw: Vec<f64> = wavelengths
                .iter()
                .map(|w| (-0.5 * ((w - peak) / self.width_nm).powi(2)).exp())
                .collect();
            let total: f64 = raw.iter().sum();
            if !(total > 0.0) {
                return Err(NesrError::Domain(format!(
                    "camera channel at {peak} nm has no response over the band grid"
                )));
            }
            Ok(raw.into_iter().map(|r| r / total).collect())
        };
        Ok([
            channel(self.peaks_nm[0])?,
            channel(self.peaks_nm[1])?,
            channel(self.peaks_nm[2])?,
        ])
    }
}

/// `RGB_c = Σ_b w_c(λ_b)·I(λ_b)` with explicit weights.
pub fn project_with_weights(img: &SpectralImage, weights: &ChannelWeights) -> Result<Tensor> {
    let bands = img.bands();
    if weights.iter().any(|w| w.len() != bands) {
        return Err(NesrError::Dimension(format!(
            "camera weights cover {} bands, image has {bands}",
            weights[0].len()
        )));
    }
    let plane = img.height() * img.width();
    let mut out = vec![0.0; 3 * plane];
    for (c, w) in weights.iter().enumerate() {
        let dst = &mut out[c * plane..(c + 1) * plane];
        for (b, &wb) in w.iter().enumerate() {
            for (d, &v) in dst.iter_mut().zip(img.band(b)) {
                *d += wb * v;
            }
        }
    }
    Ok(Tensor::new(&[3, img.height(), img.width()], out)?)
}

pub fn project_to_rgb(img: &SpectralImage, camera: &CameraResponse) -> Result<Tensor> {
    project_with_weights(img, &camera.weights(img.wavelengths())?)
}

//! Analytic linear-mixing scenes that can be sampled at any wavelength.
//!
//! Each endmember spectrum is a sum of 2–4 Gaussians over wavelength, scaled so
//! its peak over [400, 700] nm equals a per-endmember brightness in
//! [0.3, 1]. Abundance maps come from a per-pixel softmax over smoothed
//! Gaussian noise fields, so they are nonnegative and sum to one. Radiance is
//! `Σ_k a_k(x, y)·s_k(λ)`, clamped to 1 (the clamp only absorbs peak-search
//! round-off on the dense grid).

use nesr_tensor::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{NesrError, Result};
use crate::synth::bands::{validate_wavelengths, LAMBDA_MAX, LAMBDA_MIN};
use crate::synth::image::SpectralImage;

pub const MIN_EXTENT: usize = 8;
pub const MAX_ENDMEMBERS: usize = 8;

/// Scale applied to standardized noise before the abundance softmax; larger
/// values give purer regions.
const ABUNDANCE_SHARPNESS: f64 = 3.0;
/// Spacing (nm) of the grid used to locate each endmember's peak.
const PEAK_SEARCH_STEP: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianComponent {
    pub center_nm: f64,
    pub width_nm: f64,
    pub amplitude: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Endmember {
    pub components: Vec<GaussianComponent>,
    /// Multiplier that puts the spectrum's peak at its brightness.
    pub scale: f64,
}

impl Endmember {
    pub fn radiance(&self, wavelength: f64) -> f64 {
        self.scale * raw_spectrum(&self.components, wavelength)
    }
}

fn raw_spectrum(components: &[GaussianComponent], wavelength: f64) -> f64 {
    components
        .iter()
        .map(|c| {
            let z = (wavelength - c.center_nm) / c.width_nm;
            c.amplitude * (-0.5 * z * z).exp()
        })
        .sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralScene {
    pub seed: u64,
    pub endmembers: Vec<Endmember>,
    /// `K×H×W`, nonnegative, summing to one over `K` at every pixel.
    pub abundances: Tensor,
}

impl SpectralScene {
    pub fn height(&self) -> usize {
        self.abundances.shape()[1]
    }

    pub fn width(&self) -> usize {
        self.abundances.shape()[2]
    }

    pub fn endmember_count(&self) -> usize {
        self.endmembers.len()
    }

    /// Sub-window `[top, top+height) × [left, left+width)`.
    pub fn crop(&self, top: usize, left: usize, height: usize, width: usize) -> Result<SpectralScene> {
        if height == 0 || width == 0 || top + height > self.height() || left + width > self.width() {
            return Err(NesrError::Domain(format!(
                "crop {height}×{width} at ({top}, {left}) exceeds scene {}×{}",
                self.height(),
                self.width()
            )));
        }
        let k = self.endmember_count();
        let mut data = Vec::with_capacity(k * height * width);
        for e in 0..k {
            for y in top..top + height {
                let row = (e * self.height() + y) * self.width();
                data.extend_from_slice(&self.abundances.data()[row + left..row + left + width]);
            }
        }
        Ok(SpectralScene {
            seed: self.seed,
            endmembers: self.endmembers.clone(),
            abundances: Tensor::new(&[k, height, width], data)?,
        })
    }

    /// Exact evaluation of the scene at each requested wavelength.
    pub fn sample_bands(&self, wavelengths: &[f64]) -> Result<SpectralImage> {
        validate_wavelengths(wavelengths)?;
        let plane = self.height() * self.width();
        let mut data = Vec::with_capacity(wavelengths.len() * plane);
        for &w in wavelengths {
            let spectra: Vec<f64> = self.endmembers.iter().map(|e| e.radiance(w)).collect();
            for p in 0..plane {
                let mut v = 0.0;
                for (e, s) in spectra.iter().enumerate() {
                    v += self.abundances.data()[e * plane + p] * s;
                }
                data.push(v.min(1.0));
            }
        }
        SpectralImage::new(
            wavelengths.to_vec(),
            Tensor::new(&[wavelengths.len(), self.height(), self.width()], data)?,
        )
    }
}

/// Deterministic scene from `seed`.
///
/// `height, width ≥ 8` and `1 ≤ endmembers ≤ 8`; a single endmember yields an
/// abundance map that is identically one.
pub fn generate_scene(seed: u64, height: usize, width: usize, endmembers: usize) -> Result<SpectralScene> {
    if height < MIN_EXTENT || width < MIN_EXTENT {
        return Err(NesrError::Domain(format!(
            "scene must be at least {MIN_EXTENT}×{MIN_EXTENT}, got {height}×{width}"
        )));
    }
    if !(1..=MAX_ENDMEMBERS).contains(&endmembers) {
        return Err(NesrError::Domain(format!(
            "endmember count must be in 1..={MAX_ENDMEMBERS}, got {endmembers}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let spectra = (0..endmembers).map(|_| random_endmember(&mut rng)).collect();
    let fields: Vec<Vec<f64>> = (0..endmembers)
        .map(|_| {
            let noise: Vec<f64> = (0..height * width).map(|_| rng.sample(StandardNormal)).collect();
            let sigma = height.max(width) as f64 / 8.0;
            standardize(gaussian_blur(&noise, height, width, sigma))
        })
        .collect();
    let plane = height * width;
    let mut abundances = vec![0.0; endmembers * plane];
    for p in 0..plane {
        let max = fields.iter().map(|f| f[p]).fold(f64::NEG_INFINITY, f64::max);
        let weights: Vec<f64> = fields
            .iter()
            .map(|f| (ABUNDANCE_SHARPNESS * (f[p] - max)).exp())
            .collect();
        let total: f64 = weights.iter().sum();
        for (e, w) in weights.iter().enumerate() {
            abundances[e * plane + p] = w / total;
        }
    }
    Ok(SpectralScene {
        seed,
        endmembers: spectra,
        abundances: Tensor::new(&[endmembers, height, width], abundances)?,
    })
}

fn random_endmember(rng: &mut ChaCha8Rng) -> Endmember {
    let count = rng.random_range(2..=4);
    let components: Vec<GaussianComponent> = (0..count)
        .map(|_| GaussianComponent {
            center_nm: rng.random_range(LAMBDA_MIN..=LAMBDA_MAX),
            width_nm: rng.random_range(15.0..=80.0),
            amplitude: rng.random_range(0.2..=1.0),
        })
        .collect();
    let brightness: f64 = rng.random_range(0.3..=1.0);
    let steps = ((LAMBDA_MAX - LAMBDA_MIN) / PEAK_SEARCH_STEP).round() as usize;
    let peak = (0..=steps)
        .map(|i| raw_spectrum(&components, LAMBDA_MIN + PEAK_SEARCH_STEP * i as f64))
        .fold(0.0, f64::max);
    Endmember {
        components,
        scale: brightness / peak,
    }
}

/// Separable Gaussian blur with clamped borders.
fn gaussian_blur(field: &[f64], height: usize, width: usize, sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as isize;
    let kernel: Vec<f64> = (-radius..=radius)
        .map(|d| (-0.5 * (d as f64 / sigma).powi(2)).exp())
        .collect();
    let norm: f64 = kernel.iter().sum();
    let clamp = |v: isize, n: usize| v.clamp(0, n as isize - 1) as usize;

    let mut rows = vec![0.0; field.len()];
    for y in 0..height {
        for x in 0..width {
            rows[y * width + x] = kernel
                .iter()
                .enumerate()
                .map(|(i, k)| k * field[y * width + clamp(x as isize + i as isize - radius, width)])
                .sum::<f64>()
                / norm;
        }
    }
    let mut out = vec![0.0; field.len()];
    for y in 0..height {
        for x in 0..width {
            out[y * width + x] = kernel
                .iter()
                .enumerate()
                .map(|(i, k)| k * rows[clamp(y as isize + i as isize - radius, height) * width + x])
                .sum::<f64>()
                / norm;
        }
    }
    out
}

fn standardize(mut field: Vec<f64>) -> Vec<f64> {
    let n = field.len() as f64;
    let mean = field.iter().sum::<f64>() / n;
    let var = field.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt().max(1e-12);
    field.iter_mut().for_each(|v| *v = (*v - mean) / std);
    field
}

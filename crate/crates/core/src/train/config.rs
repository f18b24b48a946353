use serde::{Deserialize, Serialize};

use crate::error::{NesrError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BandSampling {
    /// Always the uniform grid with this many bands.
    Fixed(usize),
    /// A uniform grid whose band count is drawn from `min..=max` per sample.
    UniformRandom { min: usize, max: usize },
}

impl BandSampling {
    pub fn range(self) -> (usize, usize) {
        match self {
            BandSampling::Fixed(b) => (b, b),
            BandSampling::UniformRandom { min, max } => (min, max),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputMode {
    /// Camera rendering of the 31-band ground truth.
    Rgb,
    /// The scene sampled on a uniform grid with this many bands.
    Spectral(usize),
}

impl InputMode {
    pub fn channels(self) -> usize {
        match self {
            InputMode::Rgb => 3,
            InputMode::Spectral(b) => b,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr0: f64,
    pub decay_factor: f64,
    pub decay_every: u64,
    pub max_iters: u64,
    pub crop: usize,
    pub batch: usize,
    pub band_sampling: BandSampling,
    pub input: InputMode,
    pub seed: u64,
    pub loss_eps: f64,
    /// Voxels per sample that enter the loss; `None` uses every voxel.
    pub sample_voxels: Option<usize>,
    /// Also write a checkpoint every this many iterations (0 = final only).
    pub checkpoint_every: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr0: 1e-4,
            decay_factor: 0.5,
            decay_every: 500,
            max_iters: 2000,
            crop: 32,
            batch: 4,
            band_sampling: BandSampling::Fixed(31),
            input: InputMode::Rgb,
            seed: 0,
            loss_eps: 1e-3,
            sample_voxels: None,
            checkpoint_every: 0,
        }
    }
}

impl TrainConfig {
    /// The full-scale schedule: decay every 2×10⁴ iterations up to 3×10⁵.
    pub fn full_scale() -> Self {
        TrainConfig {
            decay_every: 20_000,
            max_iters: 300_000,
            ..TrainConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: String| Err(NesrError::Config(what));
        if !(self.lr0 > 0.0 && self.lr0.is_finite()) {
            return bad(format!("lr0 must be positive, got {}", self.lr0));
        }
        if !(self.decay_factor > 0.0 && self.decay_factor <= 1.0) {
            return bad(format!("decay_factor must be in (0, 1], got {}", self.decay_factor));
        }
        if self.decay_every == 0 || self.max_iters == 0 || self.batch == 0 {
            return bad("decay_every, max_iters and batch must be at least 1".into());
        }
        if self.crop < crate::synth::scene::MIN_EXTENT {
            return bad(format!("crop must be at least {}, got {}", crate::synth::scene::MIN_EXTENT, self.crop));
        }
        let (lo, hi) = self.band_sampling.range();
        if lo == 0 || lo > hi {
            return bad(format!("band sampling range {lo}..={hi} is empty"));
        }
        if self.input.channels() == 0 {
            return bad("spectral input needs at least one band".into());
        }
        if !(self.loss_eps > 0.0) {
            return bad(format!("loss_eps must be positive, got {}", self.loss_eps));
        }
        if self.sample_voxels == Some(0) {
            return bad("sample_voxels must be at least 1".into());
        }
        Ok(())
    }
}

/// `lr0 · factor^⌊iter / decay_every⌋`.
pub fn lr_at(iter: u64, config: &TrainConfig) -> f64 {
    let steps = (iter / config.decay_every.max(1)).min(i32::MAX as u64) as i32;
    config.lr0 * config.decay_factor.powi(steps)
}

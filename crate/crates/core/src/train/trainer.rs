use log::{debug, info};
use nesr_tensor::{adam_step, AdamState, Tape, Tensor};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{NesrError, Result};
use crate::model::{forward_var, normalize_wavelengths, ModelConfig, ModelWeights};
use crate::synth::bands::uniform_grid;
use crate::synth::camera::{project_to_rgb, CameraResponse};
use crate::synth::scene::SpectralScene;
use crate::train::checkpoint::{Checkpoint, RngState};
use crate::train::config::{lr_at, InputMode, TrainConfig};

/// Bands of the canonical grid the camera integrates over.
pub const RGB_SOURCE_BANDS: usize = 31;

/// The network input for a scene: the camera image of its 31-band rendering,
/// or the scene itself on a coarse uniform grid.
pub fn render_input(scene: &SpectralScene, mode: InputMode) -> Result<Tensor> {
    match mode {
        InputMode::Rgb => {
            let gt = scene.sample_bands(&uniform_grid(RGB_SOURCE_BANDS))?;
            project_to_rgb(&gt, &CameraResponse::default())
        }
        InputMode::Spectral(bands) => Ok(scene.sample_bands(&uniform_grid(bands))?.into_volume()),
    }
}

pub struct Trainer {
    model: ModelConfig,
    config: TrainConfig,
    scenes: Vec<SpectralScene>,
    weights: ModelWeights<Tensor>,
    adam: AdamState,
    rng: ChaCha8Rng,
    iteration: u64,
    losses: Vec<f64>,
}

fn check_setup(model: &ModelConfig, config: &TrainConfig, scenes: &[SpectralScene]) -> Result<()> {
    model.validate()?;
    config.validate()?;
    if scenes.is_empty() {
        return Err(NesrError::Usage("training needs at least one scene".into()));
    }
    if model.in_channels != config.input.channels() {
        return Err(NesrError::Config(format!(
            "model expects {} input channels but the input mode provides {}",
            model.in_channels,
            config.input.channels()
        )));
    }
    if let Some(s) = scenes.iter().find(|s| s.height() < config.crop || s.width() < config.crop) {
        return Err(NesrError::Config(format!(
            "crop {} exceeds scene extent {}×{}",
            config.crop,
            s.height(),
            s.width()
        )));
    }
    Ok(())
}

impl Trainer {
    pub fn new(model: ModelConfig, config: TrainConfig, scenes: Vec<SpectralScene>) -> Result<Self> {
        check_setup(&model, &config, &scenes)?;
        let weights = ModelWeights::init(&model, config.seed)?;
        let adam = AdamState::new(&weights.clone().into_vec(), config.lr0);
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(1);
        Ok(Trainer {
            model,
            config,
            scenes,
            weights,
            adam,
            rng,
            iteration: 0,
            losses: Vec::new(),
        })
    }

    /// Continues from `checkpoint`; `max_iters` may be raised through `extend_to`.
    pub fn resume(checkpoint: Checkpoint, scenes: Vec<SpectralScene>) -> Result<Self> {
        check_setup(&checkpoint.model, &checkpoint.train, &scenes)?;
        Ok(Trainer {
            rng: checkpoint.rng.restore()?,
            model: checkpoint.model,
            config: checkpoint.train,
            scenes,
            weights: checkpoint.weights,
            adam: checkpoint.adam,
            iteration: checkpoint.iteration,
            losses: checkpoint.losses,
        })
    }

    pub fn iteration(&self) -> u64 {
        self.iteration
    }

    pub fn losses(&self) -> &[f64] {
        &self.losses
    }

    pub fn weights(&self) -> &ModelWeights<Tensor> {
        &self.weights
    }

    pub fn model_config(&self) -> &ModelConfig {
        &self.model
    }

    pub fn extend_to(&mut self, max_iters: u64) {
        self.config.max_iters = max_iters;
    }

    pub fn is_done(&self) -> bool {
        self.iteration >= self.config.max_iters
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            model: self.model.clone(),
            train: self.config.clone(),
            iteration: self.iteration,
            weights: self.weights.clone(),
            adam: self.adam.clone(),
            rng: RngState::capture(&self.rng),
            losses: self.losses.clone(),
        }
    }

    /// Loss and gradients for one randomly drawn sample.
    fn sample_gradients(&mut self) -> Result<(f64, Vec<Tensor>)> {
        let crop = self.config.crop;
        let scene = &self.scenes[self.rng.random_range(0..self.scenes.len())];
        let top = self.rng.random_range(0..=scene.height() - crop);
        let left = self.rng.random_range(0..=scene.width() - crop);
        let (lo, hi) = self.config.band_sampling.range();
        let bands = self.rng.random_range(lo..=hi);
        let patch = scene.crop(top, left, crop, crop)?;
        let wavelengths = uniform_grid(bands);
        let gt = patch.sample_bands(&wavelengths)?.into_volume();
        let input = render_input(&patch, self.config.input)?;
        let grid = normalize_wavelengths(&wavelengths, crop, crop)?;

        let total = gt.len();
        let query: Option<Vec<usize>> = match self.config.sample_voxels {
            Some(k) if k < total => {
                let mut idx = sample(&mut self.rng, total, k).into_vec();
                idx.sort_unstable();
                Some(idx)
            }
            _ => None,
        };
        let target = match &query {
            Some(idx) => Tensor::new(&[idx.len(), 1], idx.iter().map(|&i| gt.data()[i]).collect())?,
            None => gt.reshape(&[total, 1])?,
        };

        let tape = Tape::new();
        let w = self.weights.map(|_, t| tape.leaf(t.clone()));
        let x = tape.constant(input);
        let pred = forward_var(&x, &grid, &self.model, &w, query.as_deref())?;
        let loss = pred.mean_relative_abs_error(&target, self.config.loss_eps)?;
        let value = loss.value().item()?;
        let grads = tape.backward(&loss)?;
        let out = w.named().into_iter().map(|(_, v)| grads.wrt(v)).collect();
        Ok((value, out))
    }

    /// One optimizer step over a batch; returns the mean batch loss.
    pub fn step(&mut self) -> Result<f64> {
        let batch = self.config.batch;
        let mut total = 0.0;
        let mut grads: Option<Vec<Tensor>> = None;
        for _ in 0..batch {
            let (loss, g) = self.sample_gradients()?;
            total += loss;
            match grads.as_mut() {
                None => grads = Some(g),
                Some(acc) => {
                    for (a, b) in acc.iter_mut().zip(&g) {
                        a.add_assign(b)?;
                    }
                }
            }
        }
        let loss = total / batch as f64;
        let lr = lr_at(self.iteration, &self.config);
        if !loss.is_finite() {
            return Err(NesrError::NonFiniteLoss {
                iteration: self.iteration,
                lr,
                seed: self.config.seed,
            });
        }
        let grads: Vec<Tensor> = grads
            .expect("batch >= 1")
            .into_iter()
            .map(|g| g.scale(1.0 / batch as f64))
            .collect();
        let mut params = self.weights.clone().into_vec();
        self.adam.lr = lr;
        adam_step(&mut params, &grads, &mut self.adam)?;
        self.weights = self.weights.with_values(params)?;
        self.losses.push(loss);
        self.iteration += 1;
        debug!("iter {} loss {loss:.6} lr {lr:e}", self.iteration);
        Ok(loss)
    }

    /// Steps until `max_iters`, calling `on_checkpoint` every
    /// `checkpoint_every` iterations.
    pub fn run(&mut self, mut on_checkpoint: impl FnMut(&Checkpoint) -> Result<()>) -> Result<()> {
        let every = self.config.checkpoint_every;
        let log_every = (self.config.max_iters / 20).max(1);
        while !self.is_done() {
            let loss = self.step()?;
            if self.iteration.is_multiple_of(log_every) {
                info!("iter {}/{} loss {loss:.5}", self.iteration, self.config.max_iters);
            }
            if every > 0 && self.iteration.is_multiple_of(every) && !self.is_done() {
                on_checkpoint(&self.checkpoint())?;
            }
        }
        Ok(())
    }
}

/// Trains from scratch to `config.max_iters`.
pub fn train(scenes: Vec<SpectralScene>, model: ModelConfig, config: TrainConfig) -> Result<Checkpoint> {
    let mut trainer = Trainer::new(model, config, scenes)?;
    trainer.run(|_| Ok(()))?;
    Ok(trainer.checkpoint())
}

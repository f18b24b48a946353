use nesr_tensor::ops::resize_linear;
use nesr_tensor::Tensor;
use rayon::prelude::*;

use crate::error::{NesrError, Result};
use crate::eval::metrics::{average, metrics, Metrics, DEFAULT_EPS};
use crate::model::{forward, ModelConfig, ModelWeights};
use crate::synth::bands::validate_wavelengths;
use crate::synth::scene::SpectralScene;
use crate::train::{render_input, Checkpoint, InputMode};

/// Runs `f` on a pool of `workers` threads (0 = one per core).
pub fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| NesrError::Config(format!("cannot start {workers} workers: {e}")))?;
    Ok(pool.install(f))
}

/// Metrics of `predict` against the analytic ground truth at `wavelengths`,
/// averaged over scenes in scene order.
pub fn evaluate_with<F>(scenes: &[SpectralScene], wavelengths: &[f64], workers: usize, predict: F) -> Result<Metrics>
where
    F: Fn(&SpectralScene) -> Result<Tensor> + Sync,
{
    if scenes.is_empty() {
        return Err(NesrError::Usage("evaluation needs at least one scene".into()));
    }
    validate_wavelengths(wavelengths)?;
    let per_scene = with_workers(workers, || {
        scenes
            .par_iter()
            .map(|scene| {
                let gt = scene.sample_bands(wavelengths)?.into_volume();
                metrics(&predict(scene)?, &gt, DEFAULT_EPS)
            })
            .collect::<Result<Vec<_>>>()
    })??;
    average(&per_scene)
}

/// Prediction of a trained model for one scene.
pub fn predict(model: &ModelConfig, weights: &ModelWeights<Tensor>, input: InputMode, scene: &SpectralScene, wavelengths: &[f64]) -> Result<Tensor> {
    Ok(forward(&render_input(scene, input)?, wavelengths, model, weights)?.into_volume())
}

pub fn evaluate(checkpoint: &Checkpoint, scenes: &[SpectralScene], wavelengths: &[f64], workers: usize) -> Result<Metrics> {
    evaluate_with(scenes, wavelengths, workers, |scene| {
        predict(&checkpoint.model, &checkpoint.weights, checkpoint.train.input, scene, wavelengths)
    })
}

/// Linear resize of a `bands×H×W` volume along the band axis.
pub fn resize_bands(volume: &Tensor, bands: usize) -> Result<Tensor> {
    let moved = volume.permute(&[1, 2, 0])?;
    Ok(resize_linear(&moved, bands)?.permute(&[2, 0, 1])?)
}

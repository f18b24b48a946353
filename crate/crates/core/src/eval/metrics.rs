use nesr_tensor::Tensor;
use serde::{Deserialize, Serialize};

use crate::error::{NesrError, Result};
use crate::model::mrae_loss;

pub const DEFAULT_EPS: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub mrae: f64,
    pub rmse: f64,
}

pub fn mrae(prediction: &Tensor, ground_truth: &Tensor, eps: f64) -> Result<f64> {
    mrae_loss(prediction, ground_truth, eps)
}

/// `sqrt(mean((Y − GT)²))`.
pub fn rmse(prediction: &Tensor, ground_truth: &Tensor) -> Result<f64> {
    if prediction.shape() != ground_truth.shape() {
        return Err(NesrError::Dimension(format!(
            "prediction {:?} vs ground truth {:?}",
            prediction.shape(),
            ground_truth.shape()
        )));
    }
    let sq: f64 = prediction
        .data()
        .iter()
        .zip(ground_truth.data())
        .map(|(p, g)| (p - g) * (p - g))
        .sum();
    Ok((sq / prediction.len() as f64).sqrt())
}

pub fn metrics(prediction: &Tensor, ground_truth: &Tensor, eps: f64) -> Result<Metrics> {
    Ok(Metrics {
        mrae: mrae(prediction, ground_truth, eps)?,
        rmse: rmse(prediction, ground_truth)?,
    })
}

/// Mean of per-scene metrics, summed in the given order.
pub fn average(per_scene: &[Metrics]) -> Result<Metrics> {
    if per_scene.is_empty() {
        return Err(NesrError::Usage("no scenes to average".into()));
    }
    let n = per_scene.len() as f64;
    Ok(Metrics {
        mrae: per_scene.iter().map(|m| m.mrae).sum::<f64>() / n,
        rmse: per_scene.iter().map(|m| m.rmse).sum::<f64>() / n,
    })
}

/// Per-pixel relative error averaged over bands (`H×W`).
pub fn error_map(prediction: &Tensor, ground_truth: &Tensor, eps: f64) -> Result<Tensor> {
    if prediction.shape() != ground_truth.shape() || prediction.rank() != 3 {
        return Err(NesrError::Dimension(format!(
            "error map needs equal bands×H×W volumes, got {:?} and {:?}",
            prediction.shape(),
            ground_truth.shape()
        )));
    }
    let (bands, plane) = (prediction.shape()[0], prediction.shape()[1] * prediction.shape()[2]);
    let mut out = vec![0.0; plane];
    for b in 0..bands {
        let p = &prediction.data()[b * plane..][..plane];
        let g = &ground_truth.data()[b * plane..][..plane];
        for ((o, pv), gv) in out.iter_mut().zip(p).zip(g) {
            *o += (pv - gv).abs() / (gv + eps);
        }
    }
    out.iter_mut().for_each(|v| *v /= bands as f64);
    Ok(Tensor::new(&prediction.shape()[1..], out)?)
}

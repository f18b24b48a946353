use crate::error::{Result, TensorError};
use crate::tape::Var;
use crate::tensor::Tensor;

/// `mean(|pred - target| / (target + eps))`.
pub fn mean_relative_abs_error(pred: &Tensor, target: &Tensor, eps: f64) -> Result<f64> {
    if pred.shape() != target.shape() {
        return Err(TensorError::dim("mean_relative_abs_error", pred.shape(), target.shape()));
    }
    let total: f64 = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(p, t)| (p - t).abs() / (t + eps))
        .sum();
    Ok(total / pred.len() as f64)
}

impl<'t> Var<'t> {
    /// Mean relative absolute error against a fixed target; the subgradient
    /// at `pred == target` is zero.
    pub fn mean_relative_abs_error(&self, target: &Tensor, eps: f64) -> Result<Var<'t>> {
        let value = Tensor::scalar(mean_relative_abs_error(self.value(), target, eps)?);
        self.tape()
            .note_kinks(|| self.value().data().iter().zip(target.data()).map(|(p, t)| p > t));
        let pred = self.shared();
        let target = target.clone();
        Ok(self.tape().record(value, &[self], move |g, _| {
            let scale = g.data()[0] / pred.len() as f64;
            let grad = pred
                .zip_map(&target, |p, t| {
                    let diff = p - t;
                    if diff == 0.0 {
                        0.0
                    } else {
                        scale * diff.signum() / (t + eps)
                    }
                })
                .expect("shape checked");
            vec![Some(grad)]
        }))
    }
}

use crate::error::{Result, TensorError};
use crate::tape::Var;
use crate::tensor::Tensor;

/// Row-wise softmax over the last axis, computed with max subtraction.
pub fn softmax(logits: &Tensor) -> Result<Tensor> {
    if !logits.all_finite() {
        return Err(TensorError::NonFinite { op: "softmax" });
    }
    let width = *logits
        .shape()
        .last()
        .ok_or_else(|| TensorError::config("softmax", "needs at least one axis"))?;
    let mut out = logits.clone();
    for row in out.data_mut().chunks_mut(width) {
        softmax_row(row);
    }
    Ok(out)
}

pub(crate) fn softmax_row(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    row.iter_mut().for_each(|v| *v /= total);
}

/// Input gradient of a row softmax given its output `y` and upstream `g`.
pub(crate) fn softmax_row_backward(y: &[f64], g: &[f64], out: &mut [f64]) {
    let dot: f64 = y.iter().zip(g).map(|(a, b)| a * b).sum();
    for ((o, &yv), &gv) in out.iter_mut().zip(y).zip(g) {
        *o = yv * (gv - dot);
    }
}

impl<'t> Var<'t> {
    pub fn softmax(&self) -> Result<Var<'t>> {
        let value = softmax(self.value())?;
        let y = std::rc::Rc::new(value.clone());
        Ok(self.tape().record(value, &[self], move |g, _| {
            let width = *y.shape().last().expect("checked");
            let mut out = vec![0.0; y.len()];
            for ((yr, gr), or) in y
                .data()
                .chunks(width)
                .zip(g.data().chunks(width))
                .zip(out.chunks_mut(width))
            {
                softmax_row_backward(yr, gr, or);
            }
            vec![Some(Tensor::from_parts(y.shape().to_vec(), out))]
        }))
    }
}

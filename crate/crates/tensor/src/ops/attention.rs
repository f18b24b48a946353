//! Batched dot-product attention `softmax(scale·q·kᵀ)·v` with the `M×M`
//! weight matrix recomputed per batch entry in the backward pass instead of
//! being stored, so memory stays `O(M²)` rather than `O(B·M²)`.

use crate::error::{Result, TensorError};
use crate::ops::matmul::gemm;
use crate::ops::softmax::{softmax_row, softmax_row_backward};
use crate::tape::Var;
use crate::tensor::Tensor;

fn dims(q: &[usize], k: &[usize], v: &[usize]) -> Result<(usize, usize, usize)> {
    if q.len() != 3 || q != k || q != v {
        return Err(TensorError::dim("attention", q, if q != k { k } else { v }));
    }
    Ok((q[0], q[1], q[2]))
}

fn weights_into(q: &[f64], k: &[f64], m: usize, c: usize, scale: f64, out: &mut [f64]) {
    gemm(m, c, m, q, false, k, true, 0.0, out);
    if scale != 1.0 {
        out.iter_mut().for_each(|v| *v *= scale);
    }
    for row in out.chunks_mut(m) {
        softmax_row(row);
    }
}

/// Attention weights `softmax(scale·q·kᵀ)` for every batch entry (`B×M×M`).
pub fn attention_weights(q: &Tensor, k: &Tensor, scale: f64) -> Result<Tensor> {
    let (b, m, c) = dims(q.shape(), k.shape(), k.shape())?;
    if !q.all_finite() || !k.all_finite() {
        return Err(TensorError::NonFinite { op: "attention" });
    }
    let mut out = vec![0.0; b * m * m];
    for i in 0..b {
        weights_into(&q.data()[i * m * c..], &k.data()[i * m * c..], m, c, scale, &mut out[i * m * m..][..m * m]);
    }
    Ok(Tensor::from_parts(vec![b, m, m], out))
}

impl<'t> Var<'t> {
    /// Batched attention over `B×M×C` queries, keys and values.
    pub fn attention(&self, key: &Var<'t>, value: &Var<'t>, scale: f64) -> Result<Var<'t>> {
        let (b, m, c) = dims(self.shape(), key.shape(), value.shape())?;
        if !self.value().all_finite() || !key.value().all_finite() {
            return Err(TensorError::NonFinite { op: "attention" });
        }
        let mut out = vec![0.0; b * m * c];
        let mut a = vec![0.0; m * m];
        for i in 0..b {
            let off = i * m * c;
            weights_into(&self.value().data()[off..], &key.value().data()[off..], m, c, scale, &mut a);
            gemm(m, m, c, &a, false, &value.value().data()[off..], false, 0.0, &mut out[off..][..m * c]);
        }
        let (qs, ks, vs) = (self.shared(), key.shared(), value.shared());
        let result = Tensor::from_parts(vec![b, m, c], out);
        Ok(self.tape().record(result, &[self, key, value], move |g, need| {
            let mut dq = vec![0.0; b * m * c];
            let mut dk = vec![0.0; b * m * c];
            let mut dv = vec![0.0; b * m * c];
            let mut a = vec![0.0; m * m];
            let mut da = vec![0.0; m * m];
            let mut ds = vec![0.0; m * m];
            for i in 0..b {
                let off = i * m * c;
                let (q, k, v, go) = (&qs.data()[off..], &ks.data()[off..], &vs.data()[off..], &g.data()[off..]);
                weights_into(q, k, m, c, scale, &mut a);
                if need[2] {
                    // dV = Aᵀ·dO
                    gemm(m, m, c, &a, true, go, false, 0.0, &mut dv[off..][..m * c]);
                }
                if need[0] || need[1] {
                    // dA = dO·Vᵀ, then through the row softmax and the scale
                    gemm(m, c, m, go, false, v, true, 0.0, &mut da);
                    for ((ar, dar), dsr) in a.chunks(m).zip(da.chunks(m)).zip(ds.chunks_mut(m)) {
                        softmax_row_backward(ar, dar, dsr);
                    }
                    if scale != 1.0 {
                        ds.iter_mut().for_each(|x| *x *= scale);
                    }
                    if need[0] {
                        gemm(m, m, c, &ds, false, k, false, 0.0, &mut dq[off..][..m * c]);
                    }
                    if need[1] {
                        gemm(m, m, c, &ds, true, q, false, 0.0, &mut dk[off..][..m * c]);
                    }
                }
            }
            let shape = vec![b, m, c];
            vec![
                need[0].then(|| Tensor::from_parts(shape.clone(), dq)),
                need[1].then(|| Tensor::from_parts(shape.clone(), dk)),
                need[2].then(|| Tensor::from_parts(shape.clone(), dv)),
            ]
        }))
    }
}

use crate::error::{Result, TensorError};
use crate::tape::Var;
use crate::tensor::Tensor;

/// Interpolation taps for one output position: `(i0, i1, frac)` meaning
/// `(1-frac)·x[i0] + frac·x[i1]`.
///
/// Endpoints are aligned: output index `j` reads source position
/// `j·(len_in-1)/(len_out-1)`; a single output reads index 0.
pub fn linear_taps(len_in: usize, len_out: usize) -> Vec<(usize, usize, f64)> {
    (0..len_out)
        .map(|j| {
            if len_out == 1 || len_in == 1 {
                return (0, 0, 0.0);
            }
            let pos = (j * (len_in - 1)) as f64 / (len_out - 1) as f64;
            let i0 = (pos.floor() as usize).min(len_in - 1);
            let frac = pos - i0 as f64;
            (i0, (i0 + 1).min(len_in - 1), frac)
        })
        .collect()
}

/// Linear resize of the last axis to `target_len`.
pub fn resize_linear(profile: &Tensor, target_len: usize) -> Result<Tensor> {
    if target_len < 1 {
        return Err(TensorError::domain("resize_linear", "target length must be at least 1"));
    }
    if profile.rank() == 0 {
        return Err(TensorError::config("resize_linear", "needs at least one axis"));
    }
    let len_in = *profile.shape().last().expect("rank >= 1");
    let taps = linear_taps(len_in, target_len);
    let rows = profile.len() / len_in;
    let mut out = Vec::with_capacity(rows * target_len);
    for row in profile.data().chunks(len_in) {
        out.extend(taps.iter().map(|&(i0, i1, t)| {
            if t == 0.0 {
                row[i0]
            } else {
                (1.0 - t) * row[i0] + t * row[i1]
            }
        }));
    }
    let mut shape = profile.shape().to_vec();
    *shape.last_mut().expect("rank >= 1") = target_len;
    Ok(Tensor::from_parts(shape, out))
}

impl<'t> Var<'t> {
    pub fn resize_linear(&self, target_len: usize) -> Result<Var<'t>> {
        let value = resize_linear(self.value(), target_len)?;
        let shape = self.shape().to_vec();
        let len_in = *shape.last().expect("checked");
        Ok(self.tape().record(value, &[self], move |g, _| {
            let taps = linear_taps(len_in, target_len);
            let mut out = vec![0.0; g.len() / target_len * len_in];
            for (grow, orow) in g.data().chunks(target_len).zip(out.chunks_mut(len_in)) {
                for (&gv, &(i0, i1, t)) in grow.iter().zip(&taps) {
                    orow[i0] += (1.0 - t) * gv;
                    orow[i1] += t * gv;
                }
            }
            vec![Some(Tensor::from_parts(shape.clone(), out))]
        }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn midpoint_and_thirds() {
        let p = Tensor::new(&[1, 2], vec![1., 3.]).unwrap();
        assert_eq!(resize_linear(&p, 3).unwrap().data(), &[1., 2., 3.]);
        let q = Tensor::new(&[1, 2], vec![2., 4.]).unwrap();
        let r = resize_linear(&q, 4).unwrap();
        let expected = [2.0, 8.0 / 3.0, 10.0 / 3.0, 4.0];
        for (a, b) in r.data().iter().zip(expected) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn single_output_reads_first_column() {
        let p = Tensor::new(&[2, 3], vec![1., 2., 3., 4., 5., 6.]).unwrap();
        assert_eq!(resize_linear(&p, 1).unwrap().data(), &[1., 4.]);
        assert!(resize_linear(&p, 0).is_err());
    }

    #[test]
    fn single_input_replicates() {
        let p = Tensor::new(&[2, 1], vec![7., 9.]).unwrap();
        assert_eq!(resize_linear(&p, 3).unwrap().data(), &[7., 7., 7., 9., 9., 9.]);
    }
}

use crate::error::{Result, TensorError};
use crate::tape::Var;
use crate::tensor::Tensor;

fn same_shape(op: &'static str, a: &Var<'_>, b: &Var<'_>) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(TensorError::dim(op, a.shape(), b.shape()));
    }
    Ok(())
}

/// Adds `bias` (length `shape[axis]`) to every slice along `axis`.
pub fn add_bias(x: &Tensor, bias: &Tensor, axis: usize) -> Result<Tensor> {
    let (outer, extent, inner) = split_axis(x.shape(), axis, "add_bias")?;
    if bias.len() != extent {
        return Err(TensorError::dim("add_bias", x.shape(), bias.shape()));
    }
    let mut out = x.clone();
    let b = bias.data();
    for block in out.data_mut().chunks_mut(extent * inner) {
        for (row, &bv) in block.chunks_mut(inner).zip(b) {
            row.iter_mut().for_each(|v| *v += bv);
        }
    }
    debug_assert_eq!(out.len(), outer * extent * inner);
    Ok(out)
}

/// Sums `x` over every axis except `axis`.
fn reduce_to_axis(x: &Tensor, axis: usize) -> Tensor {
    let extent = x.shape()[axis];
    let inner: usize = x.shape()[axis + 1..].iter().product();
    let mut out = vec![0.0; extent];
    if inner == 1 {
        for block in x.data().chunks(extent) {
            for (o, v) in out.iter_mut().zip(block) {
                *o += v;
            }
        }
    } else {
        for block in x.data().chunks(extent * inner) {
            for (o, row) in out.iter_mut().zip(block.chunks(inner)) {
                *o += row.iter().sum::<f64>();
            }
        }
    }
    Tensor::from_parts(vec![extent], out)
}

pub(crate) fn split_axis(shape: &[usize], axis: usize, op: &'static str) -> Result<(usize, usize, usize)> {
    if axis >= shape.len() {
        return Err(TensorError::config(op, format!("axis {axis} out of range for {shape:?}")));
    }
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    Ok((outer, shape[axis], inner))
}

impl<'t> Var<'t> {
    pub fn add(&self, other: &Var<'t>) -> Result<Var<'t>> {
        same_shape("add", self, other)?;
        let value = self.value().zip_map(other.value(), |a, b| a + b)?;
        Ok(self.tape().record(value, &[self, other], |g, _| {
            vec![Some(g.clone()), Some(g.clone())]
        }))
    }

    pub fn sub(&self, other: &Var<'t>) -> Result<Var<'t>> {
        same_shape("sub", self, other)?;
        let value = self.value().zip_map(other.value(), |a, b| a - b)?;
        Ok(self.tape().record(value, &[self, other], |g, _| {
            vec![Some(g.clone()), Some(g.scale(-1.0))]
        }))
    }

    /// Elementwise product.
    pub fn mul(&self, other: &Var<'t>) -> Result<Var<'t>> {
        same_shape("mul", self, other)?;
        let value = self.value().zip_map(other.value(), |a, b| a * b)?;
        let (a, b) = (self.shared(), other.shared());
        Ok(self.tape().record(value, &[self, other], move |g, need| {
            vec![
                need[0].then(|| g.zip_map(&b, |x, y| x * y).expect("shape checked")),
                need[1].then(|| g.zip_map(&a, |x, y| x * y).expect("shape checked")),
            ]
        }))
    }

    pub fn scale(&self, factor: f64) -> Var<'t> {
        let value = self.value().scale(factor);
        self.tape()
            .record(value, &[self], move |g, _| vec![Some(g.scale(factor))])
    }

    /// Broadcast-adds a vector along `axis`.
    pub fn add_bias(&self, bias: &Var<'t>, axis: usize) -> Result<Var<'t>> {
        let value = add_bias(self.value(), bias.value(), axis)?;
        Ok(self.tape().record(value, &[self, bias], move |g, need| {
            vec![Some(g.clone()), need[1].then(|| reduce_to_axis(g, axis))]
        }))
    }

    /// Sum of all elements, as a rank-0 tensor.
    pub fn sum(&self) -> Var<'t> {
        let shape = self.shape().to_vec();
        let value = Tensor::scalar(self.value().sum());
        self.tape().record(value, &[self], move |g, _| {
            vec![Some(Tensor::full(&shape, g.data()[0]))]
        })
    }

    pub fn mean(&self) -> Var<'t> {
        let n = self.value().len() as f64;
        self.sum().scale(1.0 / n)
    }
}

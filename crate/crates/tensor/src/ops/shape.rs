use crate::error::{Result, TensorError};
use crate::ops::elementwise::split_axis;
use crate::tape::Var;
use crate::tensor::Tensor;

/// Concatenates tensors along `axis`; all other extents must agree.
pub fn concat(parts: &[&Tensor], axis: usize) -> Result<Tensor> {
    let first = parts
        .first()
        .ok_or_else(|| TensorError::config("concat", "no inputs"))?;
    let (outer, _, inner) = split_axis(first.shape(), axis, "concat")?;
    let mut total = 0;
    for p in parts {
        let s = p.shape();
        if s.len() != first.rank() || s[..axis] != first.shape()[..axis] || s[axis + 1..] != first.shape()[axis + 1..] {
            return Err(TensorError::dim("concat", first.shape(), s));
        }
        total += s[axis];
    }
    let mut out = Vec::with_capacity(outer * total * inner);
    for o in 0..outer {
        for p in parts {
            let block = p.shape()[axis] * inner;
            out.extend_from_slice(&p.data()[o * block..(o + 1) * block]);
        }
    }
    let mut shape = first.shape().to_vec();
    shape[axis] = total;
    Ok(Tensor::from_parts(shape, out))
}

/// Selects rows of a matrix (`N×C` → `len(indices)×C`).
pub fn gather_rows(x: &Tensor, indices: &[usize]) -> Result<Tensor> {
    if x.rank() != 2 {
        return Err(TensorError::config("gather_rows", format!("expected a matrix, got {:?}", x.shape())));
    }
    let (rows, cols) = (x.shape()[0], x.shape()[1]);
    if indices.is_empty() {
        return Err(TensorError::config("gather_rows", "empty index list"));
    }
    let mut out = Vec::with_capacity(indices.len() * cols);
    for &i in indices {
        if i >= rows {
            return Err(TensorError::domain("gather_rows", format!("row {i} out of range {rows}")));
        }
        out.extend_from_slice(&x.data()[i * cols..(i + 1) * cols]);
    }
    Ok(Tensor::from_parts(vec![indices.len(), cols], out))
}

/// Repeats a size-1 axis `count` times.
pub fn broadcast_axis(x: &Tensor, axis: usize, count: usize) -> Result<Tensor> {
    let (outer, extent, inner) = split_axis(x.shape(), axis, "broadcast_axis")?;
    if extent != 1 || count == 0 {
        return Err(TensorError::config(
            "broadcast_axis",
            format!("axis {axis} of {:?} must have extent 1 and count must be positive", x.shape()),
        ));
    }
    let mut out = Vec::with_capacity(outer * count * inner);
    for chunk in x.data().chunks(inner) {
        for _ in 0..count {
            out.extend_from_slice(chunk);
        }
    }
    let mut shape = x.shape().to_vec();
    shape[axis] = count;
    Ok(Tensor::from_parts(shape, out))
}

fn inverse_permutation(axes: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; axes.len()];
    for (i, &a) in axes.iter().enumerate() {
        inv[a] = i;
    }
    inv
}

impl<'t> Var<'t> {
    pub fn reshape(&self, shape: &[usize]) -> Result<Var<'t>> {
        let value = self.value().reshape(shape)?;
        let original = self.shape().to_vec();
        Ok(self.tape().record(value, &[self], move |g, _| {
            vec![Some(g.reshape(&original).expect("same element count"))]
        }))
    }

    pub fn permute(&self, axes: &[usize]) -> Result<Var<'t>> {
        let value = self.value().permute(axes)?;
        let inv = inverse_permutation(axes);
        Ok(self.tape().record(value, &[self], move |g, _| {
            vec![Some(g.permute(&inv).expect("valid permutation"))]
        }))
    }

    /// Swaps the last two axes.
    pub fn transpose(&self) -> Result<Var<'t>> {
        let r = self.shape().len();
        if r < 2 {
            return Err(TensorError::config("transpose", "rank must be at least 2"));
        }
        let mut axes: Vec<usize> = (0..r).collect();
        axes.swap(r - 2, r - 1);
        self.permute(&axes)
    }

    pub fn concat(parts: &[&Var<'t>], axis: usize) -> Result<Var<'t>> {
        let first = parts
            .first()
            .ok_or_else(|| TensorError::config("concat", "no inputs"))?;
        let values: Vec<&Tensor> = parts.iter().map(|p| p.value()).collect();
        let value = concat(&values, axis)?;
        let extents: Vec<usize> = parts.iter().map(|p| p.shape()[axis]).collect();
        let shape = value.shape().to_vec();
        Ok(first.tape().record(value, parts, move |g, need| {
            let (outer, total, inner) = split_axis(&shape, axis, "concat").expect("checked");
            let mut offset = 0;
            extents
                .iter()
                .zip(need)
                .map(|(&e, &needed)| {
                    let start = offset;
                    offset += e;
                    needed.then(|| {
                        let mut out = Vec::with_capacity(outer * e * inner);
                        for o in 0..outer {
                            let base = (o * total + start) * inner;
                            out.extend_from_slice(&g.data()[base..base + e * inner]);
                        }
                        let mut s = shape.clone();
                        s[axis] = e;
                        Tensor::from_parts(s, out)
                    })
                })
                .collect()
        }))
    }

    pub fn gather_rows(&self, indices: &[usize]) -> Result<Var<'t>> {
        let value = gather_rows(self.value(), indices)?;
        let indices = indices.to_vec();
        let shape = self.shape().to_vec();
        Ok(self.tape().record(value, &[self], move |g, _| {
            let cols = shape[1];
            let mut out = Tensor::zeros(&shape);
            let data = out.data_mut();
            for (r, &i) in indices.iter().enumerate() {
                for c in 0..cols {
                    data[i * cols + c] += g.data()[r * cols + c];
                }
            }
            vec![Some(out)]
        }))
    }

    pub fn broadcast_axis(&self, axis: usize, count: usize) -> Result<Var<'t>> {
        let value = broadcast_axis(self.value(), axis, count)?;
        let shape = self.shape().to_vec();
        Ok(self.tape().record(value, &[self], move |g, _| {
            let inner: usize = shape[axis + 1..].iter().product();
            let mut out = Vec::with_capacity(g.len() / count);
            for block in g.data().chunks(count * inner) {
                let mut acc = vec![0.0; inner];
                for rep in block.chunks(inner) {
                    acc.iter_mut().zip(rep).for_each(|(a, b)| *a += b);
                }
                out.extend(acc);
            }
            vec![Some(Tensor::from_parts(shape.clone(), out))]
        }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn concat_middle_axis() {
        let a = Tensor::from_fn(&[2, 1, 2], |i| i as f64);
        let b = Tensor::from_fn(&[2, 2, 2], |i| 10.0 + i as f64);
        let c = concat(&[&a, &b], 1).unwrap();
        assert_eq!(c.shape(), &[2, 3, 2]);
        assert_eq!(c.data(), &[0., 1., 10., 11., 12., 13., 2., 3., 14., 15., 16., 17.]);
    }

    #[test]
    fn broadcast_repeats_slices() {
        let x = Tensor::new(&[2, 1, 2], vec![1., 2., 3., 4.]).unwrap();
        let y = broadcast_axis(&x, 1, 3).unwrap();
        assert_eq!(y.data(), &[1., 2., 1., 2., 1., 2., 3., 4., 3., 4., 3., 4.]);
    }
}

use crate::error::{Result, TensorError};
use crate::tape::Var;
use crate::tensor::Tensor;

/// `c = a·b + beta·c` for row-major operands, optionally reading `a` or `b`
/// transposed. `a` is logically `m×k`, `b` is `k×n`, `c` is `m×n`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_transposed: bool,
    b: &[f64],
    b_transposed: bool,
    beta: f64,
    c: &mut [f64],
) {
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    if m == 0 || n == 0 {
        return;
    }
    let (rsa, csa) = if a_transposed { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_transposed { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: the asserts above guarantee every strided access stays in bounds.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// A row-major view with explicit row stride: `rows×cols` elements starting
/// at `offset`, transposed when `transposed` is set.
#[derive(Clone, Copy)]
pub(crate) struct View {
    pub offset: usize,
    pub row_stride: usize,
    pub transposed: bool,
}

impl View {
    pub fn new(offset: usize, row_stride: usize) -> Self {
        View {
            offset,
            row_stride,
            transposed: false,
        }
    }

    pub fn t(self) -> Self {
        View {
            transposed: !self.transposed,
            ..self
        }
    }

    /// Strides of the logical `rows×cols` matrix and the last index touched.
    fn layout(self, rows: usize, cols: usize) -> (isize, isize, usize) {
        let (r, c) = if self.transposed { (cols, rows) } else { (rows, cols) };
        let last = self.offset + (r - 1) * self.row_stride + (c - 1);
        let rs = self.row_stride as isize;
        if self.transposed {
            (1, rs, last)
        } else {
            (rs, 1, last)
        }
    }
}

/// `C ← A·B + beta·C` on strided views (`A` is `m×k`, `B` is `k×n`).
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm_view(m: usize, k: usize, n: usize, a: &[f64], va: View, b: &[f64], vb: View, beta: f64, c: &mut [f64], vc: View) {
    if m == 0 || n == 0 || k == 0 {
        return;
    }
    let (rsa, csa, la) = va.layout(m, k);
    let (rsb, csb, lb) = vb.layout(k, n);
    let (rsc, csc, lc) = vc.layout(m, n);
    assert!(la < a.len() && lb < b.len() && lc < c.len());
    // SAFETY: the assert above bounds the furthest element of each view.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr().add(va.offset),
            rsa,
            csa,
            b.as_ptr().add(vb.offset),
            rsb,
            csb,
            beta,
            c.as_mut_ptr().add(vc.offset),
            rsc,
            csc,
        );
    }
}

struct MatmulDims {
    batch: usize,
    m: usize,
    k: usize,
    n: usize,
    out_shape: Vec<usize>,
}

fn matmul_dims(a: &[usize], b: &[usize]) -> Result<MatmulDims> {
    let err = || TensorError::dim("matmul", a, b);
    if a.len() < 2 || a.len() != b.len() {
        return Err(err());
    }
    let r = a.len();
    if a[..r - 2] != b[..r - 2] || a[r - 1] != b[r - 2] {
        return Err(err());
    }
    let mut out_shape = a[..r - 1].to_vec();
    out_shape.push(b[r - 1]);
    Ok(MatmulDims {
        batch: a[..r - 2].iter().product(),
        m: a[r - 2],
        k: a[r - 1],
        n: b[r - 1],
        out_shape,
    })
}

/// Matrix product over the last two axes with equal leading batch axes.
pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let d = matmul_dims(a.shape(), b.shape())?;
    let mut out = vec![0.0; d.batch * d.m * d.n];
    for i in 0..d.batch {
        gemm(
            d.m,
            d.k,
            d.n,
            &a.data()[i * d.m * d.k..],
            false,
            &b.data()[i * d.k * d.n..],
            false,
            0.0,
            &mut out[i * d.m * d.n..],
        );
    }
    Ok(Tensor::from_parts(d.out_shape, out))
}

impl<'t> Var<'t> {
    pub fn matmul(&self, other: &Var<'t>) -> Result<Var<'t>> {
        let d = matmul_dims(self.shape(), other.shape())?;
        let value = matmul(self.value(), other.value())?;
        let (a, b) = (self.shared(), other.shared());
        Ok(self.tape().record(value, &[self, other], move |g, need| {
            let (batch, m, k, n) = (d.batch, d.m, d.k, d.n);
            let da = need[0].then(|| {
                // da = g · bᵀ
                let mut out = vec![0.0; batch * m * k];
                for i in 0..batch {
                    gemm(m, n, k, &g.data()[i * m * n..], false, &b.data()[i * k * n..], true, 0.0, &mut out[i * m * k..]);
                }
                Tensor::from_parts(a.shape().to_vec(), out)
            });
            let db = need[1].then(|| {
                // db = aᵀ · g
                let mut out = vec![0.0; batch * k * n];
                for i in 0..batch {
                    gemm(k, m, n, &a.data()[i * m * k..], true, &g.data()[i * m * n..], false, 0.0, &mut out[i * k * n..]);
                }
                Tensor::from_parts(b.shape().to_vec(), out)
            });
            vec![da, db]
        }))
    }

    /// `x·w + b` for `x: N×in`, `w: in×out`, `b: out`.
    pub fn affine(&self, weight: &Var<'t>, bias: &Var<'t>) -> Result<Var<'t>> {
        self.matmul(weight)?.add_bias(bias, 1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tape::Tape;

    #[test]
    fn identity_and_hand_expansion() {
        let eye = Tensor::new(&[2, 2], vec![1., 0., 0., 1.]).unwrap();
        let col = Tensor::new(&[2, 1], vec![5., 6.]).unwrap();
        assert_eq!(matmul(&eye, &col).unwrap().data(), &[5., 6.]);
        let a = Tensor::new(&[2, 2], vec![1., 2., 3., 4.]).unwrap();
        assert_eq!(matmul(&a, &col).unwrap().data(), &[17., 39.]);
    }

    #[test]
    fn mismatch_names_both_shapes() {
        let a = Tensor::zeros(&[2, 3]);
        let b = Tensor::zeros(&[2, 3]);
        let err = matmul(&a, &b).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("[2, 3]"), "{msg}");
        assert!(matches!(err, TensorError::Dimension { .. }));
    }

    #[test]
    fn gradient_of_sum_product() {
        let tape = Tape::new();
        let a = tape.leaf(Tensor::new(&[1, 2], vec![1., 1.]).unwrap());
        let b = tape.leaf(Tensor::new(&[2, 1], vec![2., 3.]).unwrap());
        let y = a.matmul(&b).unwrap().sum();
        let g = tape.backward(&y).unwrap();
        assert_eq!(g.wrt(&a).data(), &[2., 3.]);
        assert_eq!(g.wrt(&b).data(), &[1., 1.]);
    }

    #[test]
    fn batched_product_matches_per_batch() {
        let a = Tensor::from_fn(&[3, 2, 4], |i| (i as f64 * 0.37).sin());
        let b = Tensor::from_fn(&[3, 4, 5], |i| (i as f64 * 0.11).cos());
        let c = matmul(&a, &b).unwrap();
        for batch in 0..3 {
            for i in 0..2 {
                for j in 0..5 {
                    let expected: f64 = (0..4).map(|k| a.at(&[batch, i, k]) * b.at(&[batch, k, j])).sum();
                    assert!((c.at(&[batch, i, j]) - expected).abs() < 1e-12);
                }
            }
        }
    }
}

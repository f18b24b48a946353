//! Zero-padded, stride-1 cross-correlation over 2D or 3D volumes.
//!
//! Rank-2 inputs are `C_in×H×W` with kernels `C_out×C_in×k×k`; rank-3 inputs
//! are `C_in×D×H×W` with kernels `C_out×C_in×k×k×k`. Padding must be
//! `(k-1)/2`, so output extents equal input extents. The kernel is not
//! flipped. The input is unrolled once into a 2D im2col matrix spanning every
//! depth slice and all depth taps share one GEMM; their outputs are then
//! shifted along depth and summed.

use crate::error::{Result, TensorError};
use crate::ops::matmul::{gemm_view, View};
use crate::tape::Var;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConvRank {
    Two,
    Three,
}

#[derive(Debug, Clone, Copy)]
struct Geometry {
    c_in: usize,
    c_out: usize,
    depth: usize,
    height: usize,
    width: usize,
    k_depth: usize,
    k: usize,
    pad_depth: usize,
    pad: usize,
}

impl Geometry {
    fn plane(&self) -> usize {
        self.height * self.width
    }

    fn taps_2d(&self) -> usize {
        self.c_in * self.k * self.k
    }
}

fn geometry(input: &[usize], kernels: &[usize], bias: &[usize], rank: ConvRank, padding: usize) -> Result<Geometry> {
    let (spatial_rank, kernel_rank) = match rank {
        ConvRank::Two => (3, 4),
        ConvRank::Three => (4, 5),
    };
    if input.len() != spatial_rank || kernels.len() != kernel_rank {
        return Err(TensorError::config(
            "convolve",
            format!("input {input:?} / kernels {kernels:?} do not match {rank:?}"),
        ));
    }
    let k = kernels[kernel_rank - 1];
    if kernels[2..].iter().any(|&e| e != k) {
        return Err(TensorError::config("convolve", format!("kernel must be cubic/square, got {kernels:?}")));
    }
    if k.is_multiple_of(2) {
        return Err(TensorError::config("convolve", format!("kernel extent {k} must be odd")));
    }
    if padding != (k - 1) / 2 {
        return Err(TensorError::config(
            "convolve",
            format!("padding {padding} must be (k-1)/2 = {}", (k - 1) / 2),
        ));
    }
    if kernels[1] != input[0] {
        return Err(TensorError::config(
            "convolve",
            format!("kernel expects {} input channels, input has {}", kernels[1], input[0]),
        ));
    }
    if bias != [kernels[0]] {
        return Err(TensorError::config(
            "convolve",
            format!("bias {bias:?} must have one entry per output channel ({})", kernels[0]),
        ));
    }
    let (depth, k_depth, pad_depth) = match rank {
        ConvRank::Two => (1, 1, 0),
        ConvRank::Three => (input[1], k, padding),
    };
    Ok(Geometry {
        c_in: input[0],
        c_out: kernels[0],
        depth,
        height: input[spatial_rank - 2],
        width: input[spatial_rank - 1],
        k_depth,
        k,
        pad_depth,
        pad: padding,
    })
}

/// Visits every contiguous run of 2D taps of input depth slice `s` as
/// `(tap row, first output pixel, first source offset, run length)`;
/// out-of-bounds taps are skipped (zero padding).
fn for_each_run(g: &Geometry, s: usize, mut f: impl FnMut(usize, usize, usize, usize)) {
    let plane = g.plane();
    let mut row = 0;
    for ci in 0..g.c_in {
        let base = (ci * g.depth + s) * plane;
        for dy in 0..g.k {
            for dx in 0..g.k {
                // output columns x with 0 <= x + dx - pad < width
                let x0 = g.pad.saturating_sub(dx);
                let x1 = (g.width + g.pad).saturating_sub(dx).min(g.width);
                for y in 0..g.height {
                    let sy = (y + dy) as isize - g.pad as isize;
                    if sy < 0 || sy as usize >= g.height || x0 >= x1 {
                        continue;
                    }
                    let src = base + sy as usize * g.width + x0 + dx - g.pad;
                    f(row, y * g.width + x0, src, x1 - x0);
                }
                row += 1;
            }
        }
    }
}

/// `taps2d×(depth·plane)` column matrix covering every input depth slice.
fn im2col(g: &Geometry, input: &[f64]) -> Vec<f64> {
    let plane = g.plane();
    let stride = g.depth * plane;
    let mut cols = vec![0.0; g.taps_2d() * stride];
    for s in 0..g.depth {
        for_each_run(g, s, |row, pixel, src, len| {
            cols[row * stride + s * plane + pixel..][..len].copy_from_slice(&input[src..src + len]);
        });
    }
    cols
}

fn col2im(g: &Geometry, cols: &[f64], grad_input: &mut [f64]) {
    let plane = g.plane();
    let stride = g.depth * plane;
    for s in 0..g.depth {
        for_each_run(g, s, |row, pixel, src, len| {
            for (d, c) in grad_input[src..src + len].iter_mut().zip(&cols[row * stride + s * plane + pixel..][..len]) {
                *d += c;
            }
        });
    }
}

/// Kernels regrouped as `k_depth` blocks of `C_out×taps2d`.
fn split_kernels(g: &Geometry, kernels: &[f64]) -> Vec<f64> {
    let (t2, kk) = (g.taps_2d(), g.k * g.k);
    let mut out = vec![0.0; kernels.len()];
    for co in 0..g.c_out {
        for ci in 0..g.c_in {
            for dz in 0..g.k_depth {
                let src = ((co * g.c_in + ci) * g.k_depth + dz) * kk;
                let dst = (dz * g.c_out + co) * t2 + ci * kk;
                out[dst..dst + kk].copy_from_slice(&kernels[src..src + kk]);
            }
        }
    }
    out
}

fn merge_kernels(g: &Geometry, split: &[f64]) -> Vec<f64> {
    let (t2, kk) = (g.taps_2d(), g.k * g.k);
    let mut out = vec![0.0; split.len()];
    for co in 0..g.c_out {
        for ci in 0..g.c_in {
            for dz in 0..g.k_depth {
                let dst = ((co * g.c_in + ci) * g.k_depth + dz) * kk;
                let src = (dz * g.c_out + co) * t2 + ci * kk;
                out[dst..dst + kk].copy_from_slice(&split[src..src + kk]);
            }
        }
    }
    out
}

/// For depth tap `dz`: the first output slice, the first input slice it
/// reads, and how many slices overlap.
fn tap_span(g: &Geometry, dz: usize) -> Option<(usize, usize, usize)> {
    let z0 = g.pad_depth.saturating_sub(dz);
    let z1 = (g.depth + g.pad_depth).saturating_sub(dz).min(g.depth);
    (z1 > z0).then(|| (z0, z0 + dz - g.pad_depth, z1 - z0))
}

fn forward(g: &Geometry, cols: &[f64], kernels: &[f64], bias: &[f64]) -> Vec<f64> {
    let plane = g.plane();
    let stride = g.depth * plane;
    let t2 = g.taps_2d();
    let stacked = split_kernels(g, kernels);
    // one row block per depth tap, each indexed by input slice
    let rows = g.k_depth * g.c_out;
    let mut taps = vec![0.0; rows * stride];
    gemm_view(rows, t2, stride, &stacked, View::new(0, t2), cols, View::new(0, stride), 0.0, &mut taps, View::new(0, stride));
    let mut out = vec![0.0; g.c_out * stride];
    for (co, chunk) in out.chunks_mut(stride).enumerate() {
        chunk.iter_mut().for_each(|v| *v = bias[co]);
        for dz in 0..g.k_depth {
            if let Some((z0, s0, span)) = tap_span(g, dz) {
                let src = &taps[(dz * g.c_out + co) * stride + s0 * plane..][..span * plane];
                for (d, v) in chunk[z0 * plane..][..span * plane].iter_mut().zip(src) {
                    *d += v;
                }
            }
        }
    }
    out
}

/// Output gradient re-indexed by input slice: row block `dz` holds, at input
/// slice `s`, the gradient of the output slice that reads `s` through tap `dz`.
fn stack_gradient(g: &Geometry, grad: &[f64]) -> Vec<f64> {
    let plane = g.plane();
    let stride = g.depth * plane;
    let mut stacked = vec![0.0; g.k_depth * g.c_out * stride];
    for dz in 0..g.k_depth {
        if let Some((z0, s0, span)) = tap_span(g, dz) {
            for co in 0..g.c_out {
                stacked[(dz * g.c_out + co) * stride + s0 * plane..][..span * plane]
                    .copy_from_slice(&grad[co * stride + z0 * plane..][..span * plane]);
            }
        }
    }
    stacked
}

/// Cross-correlation plus bias; see the module docs for layouts.
pub fn convolve(input: &Tensor, kernels: &Tensor, bias: &Tensor, rank: ConvRank, padding: usize) -> Result<Tensor> {
    let g = geometry(input.shape(), kernels.shape(), bias.shape(), rank, padding)?;
    let mut shape = input.shape().to_vec();
    shape[0] = g.c_out;
    let cols = im2col(&g, input.data());
    Ok(Tensor::from_parts(shape, forward(&g, &cols, kernels.data(), bias.data())))
}

impl<'t> Var<'t> {
    pub fn convolve(&self, kernels: &Var<'t>, bias: &Var<'t>, rank: ConvRank, padding: usize) -> Result<Var<'t>> {
        let g = geometry(self.shape(), kernels.shape(), bias.shape(), rank, padding)?;
        let cols = im2col(&g, self.value().data());
        let mut shape = self.shape().to_vec();
        shape[0] = g.c_out;
        let value = Tensor::from_parts(shape, forward(&g, &cols, kernels.value().data(), bias.value().data()));
        let weights = kernels.shared();
        let (input_shape, kernel_shape) = (self.shape().to_vec(), kernels.shape().to_vec());
        Ok(self.tape().record(value, &[self, kernels, bias], move |grad, need| {
            let stride = g.depth * g.plane();
            let t2 = g.taps_2d();
            let rows = g.k_depth * g.c_out;
            let stacked_grad = (need[0] || need[1]).then(|| stack_gradient(&g, grad.data()));
            let d_kernels = stacked_grad.as_ref().filter(|_| need[1]).map(|sg| {
                // dK (stacked) = G_stacked · colsᵀ
                let mut dk = vec![0.0; weights.len()];
                gemm_view(rows, stride, t2, sg, View::new(0, stride), &cols, View::new(0, stride).t(), 0.0, &mut dk, View::new(0, t2));
                Tensor::from_parts(kernel_shape.clone(), merge_kernels(&g, &dk))
            });
            let d_input = stacked_grad.as_ref().filter(|_| need[0]).map(|sg| {
                // dcols = K_stackedᵀ · G_stacked
                let stacked = split_kernels(&g, weights.data());
                let mut dcols = vec![0.0; t2 * stride];
                gemm_view(t2, rows, stride, &stacked, View::new(0, t2).t(), sg, View::new(0, stride), 0.0, &mut dcols, View::new(0, stride));
                let mut di = vec![0.0; input_shape.iter().product()];
                col2im(&g, &dcols, &mut di);
                Tensor::from_parts(input_shape.clone(), di)
            });
            let d_bias = need[2].then(|| {
                let sums = grad.data().chunks(stride).map(|c| c.iter().sum()).collect();
                Tensor::from_parts(vec![g.c_out], sums)
            });
            vec![d_input, d_kernels, d_bias]
        }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tape::Tape;

    #[test]
    fn unit_kernel_is_identity() {
        let input = Tensor::from_fn(&[1, 3, 4, 5], |i| i as f64 * 0.5 - 3.0);
        let kernels = Tensor::full(&[1, 1, 1, 1, 1], 1.0);
        let out = convolve(&input, &kernels, &Tensor::zeros(&[1]), ConvRank::Three, 0).unwrap();
        assert_eq!(out, input);

        let flat = Tensor::from_fn(&[1, 4, 5], |i| i as f64);
        let k2 = Tensor::full(&[1, 1, 1, 1], 1.0);
        assert_eq!(convolve(&flat, &k2, &Tensor::zeros(&[1]), ConvRank::Two, 0).unwrap(), flat);
    }

    #[test]
    fn all_ones_counts_overlapping_taps() {
        let input = Tensor::full(&[1, 3, 3, 3], 1.0);
        let kernels = Tensor::full(&[1, 1, 3, 3, 3], 1.0);
        let out = convolve(&input, &kernels, &Tensor::zeros(&[1]), ConvRank::Three, 1).unwrap();
        assert_eq!(out.at(&[0, 1, 1, 1]), 27.0);
        assert_eq!(out.at(&[0, 0, 0, 0]), 8.0);
        assert_eq!(out.at(&[0, 2, 2, 2]), 8.0);
        // edge (not corner) voxel sees 2·2·3 taps
        assert_eq!(out.at(&[0, 0, 0, 1]), 12.0);
    }

    #[test]
    fn rejects_even_kernels_and_channel_mismatch() {
        let input = Tensor::zeros(&[2, 4, 4]);
        let even = Tensor::zeros(&[1, 2, 2, 2]);
        assert!(matches!(
            convolve(&input, &even, &Tensor::zeros(&[1]), ConvRank::Two, 0),
            Err(TensorError::Config { .. })
        ));
        let wrong_channels = Tensor::zeros(&[1, 3, 3, 3]);
        assert!(matches!(
            convolve(&input, &wrong_channels, &Tensor::zeros(&[1]), ConvRank::Two, 1),
            Err(TensorError::Config { .. })
        ));
    }

    #[test]
    fn kernel_tap_gradient_sums_touched_inputs() {
        let tape = Tape::new();
        let values = Tensor::from_fn(&[1, 4, 4], |i| (i as f64 * 0.7).sin());
        let input = tape.constant(values.clone());
        let kernels = tape.leaf(Tensor::zeros(&[1, 1, 3, 3]));
        let bias = tape.leaf(Tensor::zeros(&[1]));
        let y = input.convolve(&kernels, &bias, ConvRank::Two, 1).unwrap().sum();
        let g = tape.backward(&y).unwrap();
        let dk = g.wrt(&kernels);
        // the centre tap touches every input pixel
        assert!((dk.at(&[0, 0, 1, 1]) - values.sum()).abs() < 1e-12);
        // the top-left tap touches rows 0..3, cols 0..3
        let mut expected = 0.0;
        for y in 0..3 {
            for x in 0..3 {
                expected += values.at(&[0, y, x]);
            }
        }
        assert!((dk.at(&[0, 0, 0, 0]) - expected).abs() < 1e-12);
        assert_eq!(g.wrt(&bias).data(), &[16.0]);
    }
}

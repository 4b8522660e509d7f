//! Raw numeric kernels on flat row-major buffers.
//!
//! Every output element is produced by exactly one task and every reduction
//! runs in a fixed order (fixed-size blocks, combined left to right), so
//! results are bit-identical for any rayon worker count.

use rayon::prelude::*;

use super::Element;

/// Work (in multiply-adds) below which kernels stay on the calling thread.
const PAR_THRESHOLD: usize = 1 << 15;

/// Block length for deterministic blocked reductions.
pub const REDUCE_BLOCK: usize = 4096;

/// `c[m,n] (+)= a[m,k] · b[k,n]`.
pub fn gemm<T: Element>(m: usize, k: usize, n: usize, a: &[T], b: &[T], c: &mut [T], accumulate: bool) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    let row = |(i, crow): (usize, &mut [T])| {
        if !accumulate {
            crow.fill(T::zero());
        }
        let arow = &a[i * k..(i + 1) * k];
        for (p, &av) in arow.iter().enumerate() {
            if av == T::zero() {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (cv, &bv) in crow.iter_mut().zip(brow) {
                *cv += av * bv;
            }
        }
    };
    if m > 1 && m * k * n >= PAR_THRESHOLD {
        c.par_chunks_mut(n).enumerate().for_each(row);
    } else {
        c.chunks_mut(n).enumerate().for_each(row);
    }
}

/// Transpose of a row-major `[rows, cols]` matrix.
pub fn transpose<T: Element>(rows: usize, cols: usize, a: &[T]) -> Vec<T> {
    debug_assert_eq!(a.len(), rows * cols);
    let mut out = vec![T::zero(); rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            out[c * rows + r] = a[r * cols + c];
        }
    }
    out
}

/// `c[m,n] (+)= a[m,k] · b[n,k]ᵀ`.
pub fn gemm_nt<T: Element>(m: usize, k: usize, n: usize, a: &[T], b: &[T], c: &mut [T], accumulate: bool) {
    let bt = transpose(n, k, b);
    gemm(m, k, n, a, &bt, c, accumulate);
}

/// `c[m,n] (+)= a[k,m]ᵀ · b[k,n]`.
pub fn gemm_tn<T: Element>(m: usize, k: usize, n: usize, a: &[T], b: &[T], c: &mut [T], accumulate: bool) {
    let at = transpose(k, m, a);
    gemm(m, k, n, &at, b, c, accumulate);
}

/// Sum in fixed-size blocks; block partials are combined in index order.
pub fn det_sum<T: Element>(xs: &[T]) -> T {
    let block = |chunk: &[T]| chunk.iter().fold(T::zero(), |acc, &v| acc + v);
    let partials: Vec<T> = if xs.len() >= 4 * REDUCE_BLOCK {
        xs.par_chunks(REDUCE_BLOCK).map(block).collect()
    } else {
        xs.chunks(REDUCE_BLOCK).map(block).collect()
    };
    partials.into_iter().fold(T::zero(), |acc, v| acc + v)
}

/// Geometry of one 2-D convolution window sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeom {
    pub in_h: usize,
    pub in_w: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub pad: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl ConvGeom {
    /// Output extent `floor((in + 2·pad − k) / stride) + 1`, `None` when the
    /// padded input is smaller than the kernel.
    pub fn out_extent(input: usize, k: usize, stride: usize, pad: usize) -> Option<usize> {
        let padded = input + 2 * pad;
        if padded < k || stride == 0 {
            None
        } else {
            Some((padded - k) / stride + 1)
        }
    }

    pub fn is_pointwise(&self) -> bool {
        self.kh == 1 && self.kw == 1 && self.stride == 1 && self.pad == 0
    }

    fn source(&self, o: usize, k: usize, limit: usize) -> Option<usize> {
        let pos = (o * self.stride + k) as isize - self.pad as isize;
        (pos >= 0 && (pos as usize) < limit).then_some(pos as usize)
    }
}

/// Unfolds `x[c, h, w]` into `cols[c·kh·kw, out_h·out_w]`.
pub fn im2col<T: Element>(x: &[T], channels: usize, g: &ConvGeom, cols: &mut [T]) {
    let hw_out = g.out_h * g.out_w;
    debug_assert_eq!(cols.len(), channels * g.kh * g.kw * hw_out);
    for c in 0..channels {
        let plane = &x[c * g.in_h * g.in_w..(c + 1) * g.in_h * g.in_w];
        for ky in 0..g.kh {
            for kx in 0..g.kw {
                let row = (c * g.kh + ky) * g.kw + kx;
                let dst = &mut cols[row * hw_out..(row + 1) * hw_out];
                for oy in 0..g.out_h {
                    let src_y = g.source(oy, ky, g.in_h);
                    for ox in 0..g.out_w {
                        dst[oy * g.out_w + ox] = match (src_y, g.source(ox, kx, g.in_w)) {
                            (Some(y), Some(xx)) => plane[y * g.in_w + xx],
                            _ => T::zero(),
                        };
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters `cols` back, accumulating into `x`.
pub fn col2im<T: Element>(cols: &[T], channels: usize, g: &ConvGeom, x: &mut [T]) {
    let hw_out = g.out_h * g.out_w;
    for c in 0..channels {
        let plane = &mut x[c * g.in_h * g.in_w..(c + 1) * g.in_h * g.in_w];
        for ky in 0..g.kh {
            for kx in 0..g.kw {
                let row = (c * g.kh + ky) * g.kw + kx;
                let src = &cols[row * hw_out..(row + 1) * hw_out];
                for oy in 0..g.out_h {
                    let Some(y) = g.source(oy, ky, g.in_h) else { continue };
                    for ox in 0..g.out_w {
                        if let Some(xx) = g.source(ox, kx, g.in_w) {
                            plane[y * g.in_w + xx] += src[oy * g.out_w + ox];
                        }
                    }
                }
            }
        }
    }
}

/// Per-axis sampling table for align-corners-false bilinear resizing:
/// `(lo, hi, frac)` per output index.
pub fn bilinear_table(input: usize, output: usize) -> Vec<(usize, usize, f64)> {
    let scale = input as f64 / output as f64;
    (0..output)
        .map(|o| {
            let src = ((o as f64 + 0.5) * scale - 0.5).max(0.0);
            let lo = (src.floor() as usize).min(input - 1);
            let hi = (lo + 1).min(input - 1);
            (lo, hi, src - lo as f64)
        })
        .collect()
}

use rayon::prelude::*;

use crate::autograd::{BackwardCtx, Graph, Var};
use crate::error::{Error, Result};
use crate::tensor::kernels::bilinear_table;
use crate::tensor::{Element, Tensor};

type Table<T> = Vec<(usize, usize, T)>;

fn table<T: Element>(input: usize, output: usize) -> Table<T> {
    bilinear_table(input, output).into_iter().map(|(lo, hi, f)| (lo, hi, T::of(f))).collect()
}

impl<T: Element> Graph<T> {
    /// Align-corners-false bilinear upsampling of `x[N, C, H, W]`.
    pub fn upsample_bilinear(&mut self, x: Var, out_h: usize, out_w: usize) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        if shape.len() != 4 {
            return Err(Error::shape("upsample_bilinear", &shape, &[out_h, out_w]));
        }
        let (n, c, h, w) = (shape[0], shape[1], shape[2], shape[3]);
        if out_h == 0 || out_w == 0 {
            return Err(Error::Config(format!("upsample target {out_h}x{out_w} has a zero dimension")));
        }
        if out_h < h || out_w < w {
            return Err(Error::Config(format!("upsample target {out_h}x{out_w} is smaller than input {h}x{w}")));
        }
        let (ty, tx) = (table::<T>(h, out_h), table::<T>(w, out_w));
        let src = self.value(x).data();
        let mut y = vec![T::zero(); n * c * out_h * out_w];
        y.par_chunks_mut(out_h * out_w).enumerate().for_each(|(p, dst)| {
            let plane = &src[p * h * w..(p + 1) * h * w];
            for (oy, &(y0, y1, fy)) in ty.iter().enumerate() {
                for (ox, &(x0, x1, fx)) in tx.iter().enumerate() {
                    let top = plane[y0 * w + x0] * (T::one() - fx) + plane[y0 * w + x1] * fx;
                    let bot = plane[y1 * w + x0] * (T::one() - fx) + plane[y1 * w + x1] * fx;
                    dst[oy * out_w + ox] = top * (T::one() - fy) + bot * fy;
                }
            }
        });
        let out = Tensor::new(&[n, c, out_h, out_w], y)?;
        let bw = self.any_requires_grad(&[x]).then(|| {
            Box::new(move |ctx: &BackwardCtx<'_, T>| {
                let mut dx = vec![T::zero(); n * c * h * w];
                dx.par_chunks_mut(h * w).enumerate().for_each(|(p, dplane)| {
                    let g = &ctx.grad[p * out_h * out_w..(p + 1) * out_h * out_w];
                    for (oy, &(y0, y1, fy)) in ty.iter().enumerate() {
                        for (ox, &(x0, x1, fx)) in tx.iter().enumerate() {
                            let gv = g[oy * out_w + ox];
                            let (gt, gb) = (gv * (T::one() - fy), gv * fy);
                            dplane[y0 * w + x0] += gt * (T::one() - fx);
                            dplane[y0 * w + x1] += gt * fx;
                            dplane[y1 * w + x0] += gb * (T::one() - fx);
                            dplane[y1 * w + x1] += gb * fx;
                        }
                    }
                });
                vec![Some(dx)]
            }) as _
        });
        self.push("upsample_bilinear", out, &[x], bw)
    }
}

use rayon::prelude::*;

use super::norm::softmax_strided;
use crate::autograd::{BackwardCtx, Graph, Var};
use crate::error::{Error, Result};
use crate::tensor::kernels::{gemm, gemm_nt, gemm_tn};
use crate::tensor::{Element, Tensor};

/// Copies head `h` (`d` channels) of every row of `src[rows, c]` into `[rows, d]`.
fn gather_head<T: Element>(src: &[T], rows: usize, c: usize, h: usize, d: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(rows * d);
    for r in 0..rows {
        out.extend_from_slice(&src[r * c + h * d..r * c + (h + 1) * d]);
    }
    out
}

fn scatter_head<T: Element>(dst: &mut [T], head: &[T], rows: usize, c: usize, h: usize, d: usize) {
    for r in 0..rows {
        dst[r * c + h * d..r * c + (h + 1) * d].copy_from_slice(&head[r * d..(r + 1) * d]);
    }
}

struct Dims {
    n: usize,
    l: usize,
    lk: usize,
    c: usize,
    heads: usize,
}

impl Dims {
    fn d(&self) -> usize {
        self.c / self.heads
    }
}

impl<T: Element> Graph<T> {
    /// Multi-head scaled dot-product attention. `q[N, L, C]` attends over
    /// `k, v[N, Lk, C]`; channels are split into `heads` contiguous groups and
    /// scores are scaled by `1/sqrt(C / heads)`. Projections live outside.
    pub fn attention(&mut self, q: Var, k: Var, v: Var, heads: usize) -> Result<Var> {
        let (sq, sk, sv) = (self.shape(q).to_vec(), self.shape(k).to_vec(), self.shape(v).to_vec());
        if sq.len() != 3 || sk.len() != 3 || sk != sv || sq[0] != sk[0] || sq[2] != sk[2] {
            return Err(Error::shape("attention", &sq, &sk));
        }
        if heads == 0 || sq[2] % heads != 0 {
            return Err(Error::Config(format!("{} channels not divisible by {heads} heads", sq[2])));
        }
        let dims = Dims { n: sq[0], l: sq[1], lk: sk[1], c: sq[2], heads };
        let (l, lk, c, d) = (dims.l, dims.lk, dims.c, dims.d());
        let scale = T::of(1.0 / (d as f64).sqrt());

        let (qv, kv, vv) = (self.value(q).data(), self.value(k).data(), self.value(v).data());
        let mut probs = vec![T::zero(); dims.n * heads * l * lk];
        let mut out = vec![T::zero(); dims.n * l * c];
        // one task per sample; heads write disjoint column groups of that sample's rows
        out.par_chunks_mut(l * c).zip(probs.par_chunks_mut(heads * l * lk)).enumerate().for_each(
            |(n, (out_n, probs_n))| {
                let qn = &qv[n * l * c..(n + 1) * l * c];
                let kn = &kv[n * lk * c..(n + 1) * lk * c];
                let vn = &vv[n * lk * c..(n + 1) * lk * c];
                for h in 0..heads {
                    let qh = gather_head(qn, l, c, h, d);
                    let kh = gather_head(kn, lk, c, h, d);
                    let vh = gather_head(vn, lk, c, h, d);
                    let p = &mut probs_n[h * l * lk..(h + 1) * l * lk];
                    gemm_nt(l, d, lk, &qh, &kh, p, false);
                    for row in p.chunks_mut(lk) {
                        row.iter_mut().for_each(|s| *s *= scale);
                        let scores = row.to_vec();
                        softmax_strided(&scores, lk, 1, row);
                    }
                    let mut oh = vec![T::zero(); l * d];
                    gemm(l, lk, d, p, &vh, &mut oh, false);
                    scatter_head(out_n, &oh, l, c, h, d);
                }
            },
        );
        let out = Tensor::new(&sq, out)?;

        let bw = self.any_requires_grad(&[q, k, v]).then(|| {
            Box::new(move |ctx: &BackwardCtx<'_, T>| {
                let (qv, kv, vv) = (ctx.inputs[0].data(), ctx.inputs[1].data(), ctx.inputs[2].data());
                let mut dq = vec![T::zero(); qv.len()];
                let mut dk = vec![T::zero(); kv.len()];
                let mut dv = vec![T::zero(); vv.len()];
                dq.par_chunks_mut(l * c)
                    .zip(dk.par_chunks_mut(lk * c))
                    .zip(dv.par_chunks_mut(lk * c))
                    .enumerate()
                    .for_each(|(n, ((dq_n, dk_n), dv_n))| {
                        let qn = &qv[n * l * c..(n + 1) * l * c];
                        let kn = &kv[n * lk * c..(n + 1) * lk * c];
                        let vn = &vv[n * lk * c..(n + 1) * lk * c];
                        let gn = &ctx.grad[n * l * c..(n + 1) * l * c];
                        for h in 0..heads {
                            let p = &probs[(n * heads + h) * l * lk..(n * heads + h + 1) * l * lk];
                            let qh = gather_head(qn, l, c, h, d);
                            let kh = gather_head(kn, lk, c, h, d);
                            let vh = gather_head(vn, lk, c, h, d);
                            let goh = gather_head(gn, l, c, h, d);

                            let mut dvh = vec![T::zero(); lk * d];
                            gemm_tn(lk, l, d, p, &goh, &mut dvh, false);
                            let mut dp = vec![T::zero(); l * lk];
                            gemm_nt(l, d, lk, &goh, &vh, &mut dp, false);
                            // softmax adjoint, folded with the score scale
                            for (dpr, pr) in dp.chunks_mut(lk).zip(p.chunks(lk)) {
                                let dot = dpr.iter().zip(pr).fold(T::zero(), |s, (&a, &b)| s + a * b);
                                for (a, &b) in dpr.iter_mut().zip(pr) {
                                    *a = b * (*a - dot) * scale;
                                }
                            }
                            let mut dqh = vec![T::zero(); l * d];
                            gemm(l, lk, d, &dp, &kh, &mut dqh, false);
                            let mut dkh = vec![T::zero(); lk * d];
                            gemm_tn(lk, l, d, &dp, &qh, &mut dkh, false);
                            scatter_head(dq_n, &dqh, l, c, h, d);
                            scatter_head(dk_n, &dkh, lk, c, h, d);
                            scatter_head(dv_n, &dvh, lk, c, h, d);
                        }
                    });
                vec![ctx.needs[0].then_some(dq), ctx.needs[1].then_some(dk), ctx.needs[2].then_some(dv)]
            }) as _
        });
        self.push("attention", out, &[q, k, v], bw)
    }
}

use rayon::prelude::*;

use crate::autograd::{BackwardCtx, Graph, Var};
use crate::error::{Error, Result};
use crate::tensor::kernels::{col2im, gemm, gemm_nt, gemm_tn, im2col, ConvGeom};
use crate::tensor::{Element, Tensor};

/// Stride, zero padding and group count of a 2-D convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Conv2dSpec {
    pub stride: usize,
    pub pad: usize,
    pub groups: usize,
}

impl Conv2dSpec {
    pub const POINTWISE: Conv2dSpec = Conv2dSpec { stride: 1, pad: 0, groups: 1 };

    pub fn new(stride: usize, pad: usize) -> Self {
        Self { stride, pad, groups: 1 }
    }

    pub fn grouped(mut self, groups: usize) -> Self {
        self.groups = groups;
        self
    }
}

struct ConvPlan {
    n: usize,
    c: usize,
    o: usize,
    groups: usize,
    geom: ConvGeom,
}

impl ConvPlan {
    fn cg(&self) -> usize {
        self.c / self.groups
    }
    fn og(&self) -> usize {
        self.o / self.groups
    }
    fn k(&self) -> usize {
        self.cg() * self.geom.kh * self.geom.kw
    }
    fn in_plane(&self) -> usize {
        self.geom.in_h * self.geom.in_w
    }
    fn out_plane(&self) -> usize {
        self.geom.out_h * self.geom.out_w
    }
    fn depthwise(&self) -> bool {
        self.cg() == 1 && self.og() == 1
    }
}

fn plan(xs: &[usize], ws: &[usize], spec: Conv2dSpec) -> Result<ConvPlan> {
    if xs.len() != 4 || ws.len() != 4 {
        return Err(Error::shape("conv2d", xs, ws));
    }
    let (n, c, h, w) = (xs[0], xs[1], xs[2], xs[3]);
    let (o, cg, kh, kw) = (ws[0], ws[1], ws[2], ws[3]);
    let g = spec.groups;
    if g == 0 || c % g != 0 || o % g != 0 || cg != c / g {
        return Err(Error::Config(format!(
            "conv2d: {c} input channels, {o} outputs and weight {ws:?} are inconsistent with {g} groups"
        )));
    }
    if spec.stride == 0 {
        return Err(Error::Config("conv2d: stride must be positive".into()));
    }
    let (Some(out_h), Some(out_w)) =
        (ConvGeom::out_extent(h, kh, spec.stride, spec.pad), ConvGeom::out_extent(w, kw, spec.stride, spec.pad))
    else {
        return Err(Error::Config(format!(
            "conv2d: input {h}x{w} with pad {} is smaller than kernel {kh}x{kw}",
            spec.pad
        )));
    };
    Ok(ConvPlan {
        n,
        c,
        o,
        groups: g,
        geom: ConvGeom { in_h: h, in_w: w, kh, kw, stride: spec.stride, pad: spec.pad, out_h, out_w },
    })
}

fn forward<T: Element>(p: &ConvPlan, x: &[T], w: &[T], b: Option<&[T]>) -> Vec<T> {
    let (ip, op) = (p.in_plane(), p.out_plane());
    let mut out = vec![T::zero(); p.n * p.o * op];
    if p.depthwise() {
        let g = p.geom;
        out.par_chunks_mut(op).enumerate().for_each(|(nc, plane)| {
            let ch = nc % p.c;
            let src = &x[nc * ip..(nc + 1) * ip];
            let ker = &w[ch * g.kh * g.kw..(ch + 1) * g.kh * g.kw];
            let bias = b.map_or(T::zero(), |b| b[ch]);
            depthwise_plane(&g, src, ker, bias, plane);
        });
        return out;
    }
    let (cg, og, k) = (p.cg(), p.og(), p.k());
    let mut cols = vec![T::zero(); if p.geom.is_pointwise() { 0 } else { k * op }];
    for n in 0..p.n {
        for gi in 0..p.groups {
            let xin = &x[(n * p.c + gi * cg) * ip..(n * p.c + (gi + 1) * cg) * ip];
            let cols_ref: &[T] = if p.geom.is_pointwise() {
                xin
            } else {
                im2col(xin, cg, &p.geom, &mut cols);
                &cols
            };
            let dst = &mut out[(n * p.o + gi * og) * op..(n * p.o + (gi + 1) * og) * op];
            if let Some(b) = b {
                for (oc, row) in dst.chunks_mut(op).enumerate() {
                    row.fill(b[gi * og + oc]);
                }
            }
            gemm(og, k, op, &w[gi * og * k..(gi + 1) * og * k], cols_ref, dst, true);
        }
    }
    out
}

fn depthwise_plane<T: Element>(g: &ConvGeom, src: &[T], ker: &[T], bias: T, dst: &mut [T]) {
    for oy in 0..g.out_h {
        for ox in 0..g.out_w {
            let mut acc = bias;
            for ky in 0..g.kh {
                let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                if iy < 0 || iy as usize >= g.in_h {
                    continue;
                }
                for kx in 0..g.kw {
                    let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                    if ix < 0 || ix as usize >= g.in_w {
                        continue;
                    }
                    acc += ker[ky * g.kw + kx] * src[iy as usize * g.in_w + ix as usize];
                }
            }
            dst[oy * g.out_w + ox] = acc;
        }
    }
}

/// Gradients for input, weight and bias; `None` where not requested.
type ConvGrads<T> = (Option<Vec<T>>, Option<Vec<T>>, Option<Vec<T>>);

fn backward<T: Element>(p: &ConvPlan, x: &[T], w: &[T], dy: &[T], needs: (bool, bool, bool)) -> ConvGrads<T> {
    let (ip, op) = (p.in_plane(), p.out_plane());
    let (need_x, need_w, need_b) = needs;
    let db = need_b.then(|| {
        let mut db = vec![T::zero(); p.o];
        for n in 0..p.n {
            for (oc, acc) in db.iter_mut().enumerate() {
                let row = &dy[(n * p.o + oc) * op..(n * p.o + oc + 1) * op];
                *acc += row.iter().fold(T::zero(), |s, &v| s + v);
            }
        }
        db
    });

    if p.depthwise() {
        let g = p.geom;
        let kk = g.kh * g.kw;
        let dx = need_x.then(|| {
            let mut dx = vec![T::zero(); x.len()];
            dx.par_chunks_mut(ip).enumerate().for_each(|(nc, dplane)| {
                let ch = nc % p.c;
                let ker = &w[ch * kk..(ch + 1) * kk];
                let gplane = &dy[nc * op..(nc + 1) * op];
                for oy in 0..g.out_h {
                    for ox in 0..g.out_w {
                        let gv = gplane[oy * g.out_w + ox];
                        for ky in 0..g.kh {
                            let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                            if iy < 0 || iy as usize >= g.in_h {
                                continue;
                            }
                            for kx in 0..g.kw {
                                let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                                if ix < 0 || ix as usize >= g.in_w {
                                    continue;
                                }
                                dplane[iy as usize * g.in_w + ix as usize] += ker[ky * g.kw + kx] * gv;
                            }
                        }
                    }
                }
            });
            dx
        });
        let dw = need_w.then(|| {
            let mut dw = vec![T::zero(); w.len()];
            dw.par_chunks_mut(kk).enumerate().for_each(|(ch, dker)| {
                for n in 0..p.n {
                    let nc = n * p.c + ch;
                    let src = &x[nc * ip..(nc + 1) * ip];
                    let gplane = &dy[nc * op..(nc + 1) * op];
                    for oy in 0..g.out_h {
                        for ox in 0..g.out_w {
                            let gv = gplane[oy * g.out_w + ox];
                            for ky in 0..g.kh {
                                let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                                if iy < 0 || iy as usize >= g.in_h {
                                    continue;
                                }
                                for kx in 0..g.kw {
                                    let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                                    if ix < 0 || ix as usize >= g.in_w {
                                        continue;
                                    }
                                    dker[ky * g.kw + kx] += gv * src[iy as usize * g.in_w + ix as usize];
                                }
                            }
                        }
                    }
                }
            });
            dw
        });
        return (dx, dw, db);
    }

    let (cg, og, k) = (p.cg(), p.og(), p.k());
    let pointwise = p.geom.is_pointwise();
    let mut dx = need_x.then(|| vec![T::zero(); x.len()]);
    let mut dw = need_w.then(|| vec![T::zero(); w.len()]);
    let mut cols = vec![T::zero(); if pointwise { 0 } else { k * op }];
    let mut dcols = vec![T::zero(); k * op];
    for n in 0..p.n {
        for gi in 0..p.groups {
            let x_range = (n * p.c + gi * cg) * ip..(n * p.c + (gi + 1) * cg) * ip;
            let gy = &dy[(n * p.o + gi * og) * op..(n * p.o + (gi + 1) * og) * op];
            let wg = &w[gi * og * k..(gi + 1) * og * k];
            if let Some(dw) = dw.as_mut() {
                let cols_ref: &[T] = if pointwise {
                    &x[x_range.clone()]
                } else {
                    im2col(&x[x_range.clone()], cg, &p.geom, &mut cols);
                    &cols
                };
                gemm_nt(og, op, k, gy, cols_ref, &mut dw[gi * og * k..(gi + 1) * og * k], true);
            }
            if let Some(dx) = dx.as_mut() {
                if pointwise {
                    gemm_tn(k, og, op, wg, gy, &mut dx[x_range], true);
                } else {
                    gemm_tn(k, og, op, wg, gy, &mut dcols, false);
                    col2im(&dcols, cg, &p.geom, &mut dx[x_range]);
                }
            }
        }
    }
    (dx, dw, db)
}

impl<T: Element> Graph<T> {
    /// Cross-correlation of `x[N, C, H, W]` with `w[O, C/groups, kh, kw]`
    /// plus optional bias `b[O]`. Output extents use the floor rule
    /// `(H + 2·pad − kh) / stride + 1`.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Option<Var>, spec: Conv2dSpec) -> Result<Var> {
        let p = plan(self.shape(x), self.shape(w), spec)?;
        if let Some(b) = b {
            if self.shape(b) != [p.o] {
                return Err(Error::shape("conv2d bias", self.shape(w), self.shape(b)));
            }
        }
        let data = forward(&p, self.value(x).data(), self.value(w).data(), b.map(|b| self.value(b).data()));
        let out = Tensor::new(&[p.n, p.o, p.geom.out_h, p.geom.out_w], data)?;
        let mut inputs = vec![x, w];
        inputs.extend(b);
        let bw = self.any_requires_grad(&inputs).then(|| {
            let has_bias = b.is_some();
            Box::new(move |ctx: &BackwardCtx<'_, T>| {
                let needs = (ctx.needs[0], ctx.needs[1], has_bias && ctx.needs[2]);
                let (dx, dw, db) = backward(&p, ctx.inputs[0].data(), ctx.inputs[1].data(), ctx.grad, needs);
                let mut grads = vec![dx, dw];
                if has_bias {
                    grads.push(db);
                }
                grads
            }) as _
        });
        self.push("conv2d", out, &inputs, bw)
    }
}

use rayon::prelude::*;

use super::basic::split_axis;
use crate::autograd::{BackwardCtx, Graph, Var};
use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};

/// Max-subtracted softmax of a strided slice, written into `out`.
pub(crate) fn softmax_strided<T: Element>(x: &[T], len: usize, stride: usize, out: &mut [T]) {
    let mut max = T::neg_infinity();
    for i in 0..len {
        max = max.max(x[i * stride]);
    }
    let mut total = T::zero();
    for i in 0..len {
        let e = (x[i * stride] - max).exp();
        out[i * stride] = e;
        total += e;
    }
    for i in 0..len {
        out[i * stride] /= total;
    }
}

impl<T: Element> Graph<T> {
    pub fn softmax(&mut self, x: Var, axis: usize) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        if axis >= shape.len() {
            return Err(Error::Usage(format!("softmax axis {axis} out of range for {shape:?}")));
        }
        let (outer, len, inner) = split_axis(&shape, axis);
        let src = self.value(x).data();
        let mut y = vec![T::zero(); src.len()];
        for o in 0..outer {
            let base = o * len * inner;
            for i in 0..inner {
                softmax_strided(&src[base + i..], len, inner, &mut y[base + i..]);
            }
        }
        let out = Tensor::new(&shape, y)?;
        let bw = self.any_requires_grad(&[x]).then(|| {
            Box::new(move |ctx: &BackwardCtx<'_, T>| {
                let y = ctx.output.data();
                let mut dx = vec![T::zero(); y.len()];
                for o in 0..outer {
                    let base = o * len * inner;
                    for i in 0..inner {
                        let at = |k: usize| base + i + k * inner;
                        let dot = (0..len).fold(T::zero(), |s, k| s + ctx.grad[at(k)] * y[at(k)]);
                        for k in 0..len {
                            dx[at(k)] = y[at(k)] * (ctx.grad[at(k)] - dot);
                        }
                    }
                }
                vec![Some(dx)]
            }) as _
        });
        self.push("softmax", out, &[x], bw)
    }

    /// Normalizes over the last axis, then applies `gamma`, `beta` (both of
    /// length equal to that axis). Biased variance, `eps` inside the root.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: f64) -> Result<Var> {
        if eps <= 0.0 {
            return Err(Error::Config(format!("layer_norm eps must be positive, got {eps}")));
        }
        let shape = self.shape(x).to_vec();
        let c = *shape.last().ok_or_else(|| Error::Usage("layer_norm on a scalar".into()))?;
        if self.shape(gamma) != [c] || self.shape(beta) != [c] {
            return Err(Error::shape("layer_norm", &shape, self.shape(gamma)));
        }
        let eps_t = T::of(eps);
        let inv_c = T::of(1.0 / c as f64);
        let src = self.value(x).data();
        let (gv, bv) = (self.value(gamma).data(), self.value(beta).data());
        let rows = src.len() / c;
        let mut y = vec![T::zero(); src.len()];
        // normalized activations and inverse std per row, kept for backward
        let mut xhat = vec![T::zero(); src.len()];
        let mut inv_std = vec![T::zero(); rows];
        y.par_chunks_mut(c).zip(xhat.par_chunks_mut(c)).zip(inv_std.par_iter_mut()).zip(src.par_chunks(c)).for_each(
            |(((yr, hr), is), xr)| {
                let mean = xr.iter().fold(T::zero(), |s, &v| s + v) * inv_c;
                let var = xr.iter().fold(T::zero(), |s, &v| s + (v - mean) * (v - mean)) * inv_c;
                let r = T::one() / (var + eps_t).sqrt();
                *is = r;
                for k in 0..c {
                    hr[k] = (xr[k] - mean) * r;
                    yr[k] = hr[k] * gv[k] + bv[k];
                }
            },
        );
        let out = Tensor::new(&shape, y)?;
        let bw = self.any_requires_grad(&[x, gamma, beta]).then(|| {
            Box::new(move |ctx: &BackwardCtx<'_, T>| {
                let gv = ctx.inputs[1].data();
                let dy = ctx.grad;
                let dx = ctx.needs[0].then(|| {
                    let mut dx = vec![T::zero(); dy.len()];
                    dx.par_chunks_mut(c)
                        .zip(dy.par_chunks(c))
                        .zip(xhat.par_chunks(c))
                        .zip(inv_std.par_iter())
                        .for_each(|(((dxr, dyr), hr), &r)| {
                            let mut mean_g = T::zero();
                            let mut mean_gh = T::zero();
                            for k in 0..c {
                                let gk = dyr[k] * gv[k];
                                mean_g += gk;
                                mean_gh += gk * hr[k];
                            }
                            mean_g *= inv_c;
                            mean_gh *= inv_c;
                            for k in 0..c {
                                dxr[k] = r * (dyr[k] * gv[k] - mean_g - hr[k] * mean_gh);
                            }
                        });
                    dx
                });
                let dgamma = ctx.needs[1].then(|| {
                    let mut d = vec![T::zero(); c];
                    for (dyr, hr) in dy.chunks(c).zip(xhat.chunks(c)) {
                        for k in 0..c {
                            d[k] += dyr[k] * hr[k];
                        }
                    }
                    d
                });
                let dbeta = ctx.needs[2].then(|| {
                    let mut d = vec![T::zero(); c];
                    for dyr in dy.chunks(c) {
                        d.iter_mut().zip(dyr).for_each(|(a, &g)| *a += g);
                    }
                    d
                });
                vec![dx, dgamma, dbeta]
            }) as _
        });
        self.push("layer_norm", out, &[x, gamma, beta], bw)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_slice_gives_one_over_n() {
        let mut g = Graph::<f64>::new();
        let x = g.constant(Tensor::full(&[2, 5], 3.0));
        let y = g.softmax(x, 1).unwrap();
        assert!(g.value(y).data().iter().all(|&v| (v - 0.2).abs() < 1e-15));
    }

    #[test]
    fn two_element_analytic_case() {
        let mut g = Graph::<f64>::new();
        let x = g.constant(Tensor::from_f64(&[2], &[0.0, 2f64.ln()]).unwrap());
        let y = g.softmax(x, 0).unwrap();
        let v = g.value(y).data();
        assert!((v[0] - 1.0 / 3.0).abs() < 1e-15);
        assert!((v[1] - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn softmax_along_middle_axis_sums_to_one() {
        let data: Vec<f32> = (0..2 * 3 * 4).map(|i| (i as f32 * 1.3).sin() * 20.0).collect();
        let mut g = Graph::<f32>::new();
        let x = g.constant(Tensor::new(&[2, 3, 4], data).unwrap());
        let y = g.softmax(x, 1).unwrap();
        let v = g.value(y).data();
        for o in 0..2 {
            for i in 0..4 {
                let s: f32 = (0..3).map(|k| v[o * 12 + k * 4 + i]).sum();
                assert!((s - 1.0).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn layer_norm_of_constant_row_is_zero() {
        let mut g = Graph::<f64>::new();
        let x = g.constant(Tensor::full(&[3, 4], 7.5));
        let gamma = g.constant(Tensor::ones(&[4]));
        let beta = g.constant(Tensor::zeros(&[4]));
        let y = g.layer_norm(x, gamma, beta, 1e-5).unwrap();
        assert!(g.value(y).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn layer_norm_rejects_non_positive_eps() {
        let mut g = Graph::<f64>::new();
        let x = g.constant(Tensor::full(&[1, 2], 1.0));
        let gamma = g.constant(Tensor::ones(&[2]));
        let beta = g.constant(Tensor::zeros(&[2]));
        assert!(g.layer_norm(x, gamma, beta, 0.0).is_err());
    }
}

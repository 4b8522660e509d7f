//! Elementwise, reduction and layout ops.

use crate::autograd::{BackwardCtx, Graph, Var};
use crate::error::{Error, Result};
use crate::tensor::kernels::det_sum;
use crate::tensor::{numel, Element, Tensor};

/// `(outer, axis, inner)` extents of `shape` split around `axis`.
pub(crate) fn split_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

const SQRT_2_OVER_PI: f64 = 0.797_884_560_802_865_4;
const GELU_CUBIC: f64 = 0.044_715;

fn gelu<T: Element>(x: T) -> T {
    let half = T::of(0.5);
    let inner = T::of(SQRT_2_OVER_PI) * (x + T::of(GELU_CUBIC) * x * x * x);
    half * x * (T::one() + inner.tanh())
}

fn gelu_grad<T: Element>(x: T) -> T {
    let half = T::of(0.5);
    let c = T::of(SQRT_2_OVER_PI);
    let a = T::of(GELU_CUBIC);
    let t = (c * (x + a * x * x * x)).tanh();
    half * (T::one() + t) + half * x * (T::one() - t * t) * c * (T::one() + T::of(3.0) * a * x * x)
}

pub(crate) fn sigmoid<T: Element>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

impl<T: Element> Graph<T> {
    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::shape(op, self.shape(a), self.shape(b)));
        }
        Ok(())
    }

    fn unary<F, D>(&mut self, op: &'static str, x: Var, f: F, df: D) -> Result<Var>
    where
        F: Fn(T) -> T,
        D: Fn(T, T) -> T + 'static,
    {
        let out = self.value(x).map(f);
        let bw = self.any_requires_grad(&[x]).then(|| {
            Box::new(move |ctx: &BackwardCtx<'_, T>| {
                let g = ctx.inputs[0]
                    .data()
                    .iter()
                    .zip(ctx.output.data())
                    .zip(ctx.grad)
                    .map(|((&xv, &yv), &gv)| gv * df(xv, yv))
                    .collect();
                vec![Some(g)]
            }) as _
        });
        self.push(op, out, &[x], bw)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let data = self.value(a).data().iter().zip(self.value(b).data()).map(|(&x, &y)| x + y).collect();
        let out = Tensor::new(self.shape(a), data)?;
        let bw = self.any_requires_grad(&[a, b]).then(|| {
            Box::new(|ctx: &BackwardCtx<'_, T>| {
                vec![ctx.needs[0].then(|| ctx.grad.to_vec()), ctx.needs[1].then(|| ctx.grad.to_vec())]
            }) as _
        });
        self.push("add", out, &[a, b], bw)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        let data = self.value(a).data().iter().zip(self.value(b).data()).map(|(&x, &y)| x - y).collect();
        let out = Tensor::new(self.shape(a), data)?;
        let bw = self.any_requires_grad(&[a, b]).then(|| {
            Box::new(|ctx: &BackwardCtx<'_, T>| {
                vec![
                    ctx.needs[0].then(|| ctx.grad.to_vec()),
                    ctx.needs[1].then(|| ctx.grad.iter().map(|&g| -g).collect()),
                ]
            }) as _
        });
        self.push("sub", out, &[a, b], bw)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let data = self.value(a).data().iter().zip(self.value(b).data()).map(|(&x, &y)| x * y).collect();
        let out = Tensor::new(self.shape(a), data)?;
        let bw = self.any_requires_grad(&[a, b]).then(|| {
            Box::new(|ctx: &BackwardCtx<'_, T>| {
                let (a, b) = (ctx.inputs[0].data(), ctx.inputs[1].data());
                vec![
                    ctx.needs[0].then(|| ctx.grad.iter().zip(b).map(|(&g, &y)| g * y).collect()),
                    ctx.needs[1].then(|| ctx.grad.iter().zip(a).map(|(&g, &x)| g * x).collect()),
                ]
            }) as _
        });
        self.push("mul", out, &[a, b], bw)
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Result<Var> {
        let s = T::of(s);
        self.unary("scale", x, move |v| v * s, move |_, _| s)
    }

    pub fn add_scalar(&mut self, x: Var, s: f64) -> Result<Var> {
        let s = T::of(s);
        self.unary("add_scalar", x, move |v| v + s, |_, _| T::one())
    }

    pub fn square(&mut self, x: Var) -> Result<Var> {
        self.unary("square", x, |v| v * v, |x, _| T::of(2.0) * x)
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        self.unary(
            "relu",
            x,
            |v| if v > T::zero() { v } else { T::zero() },
            |x, _| if x > T::zero() { T::one() } else { T::zero() },
        )
    }

    /// GELU, tanh approximation.
    pub fn gelu(&mut self, x: Var) -> Result<Var> {
        self.unary("gelu", x, gelu, |x, _| gelu_grad(x))
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        self.unary("sigmoid", x, sigmoid, |_, y| y * (T::one() - y))
    }

    /// Sum of all elements as a rank-0 tensor.
    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let out = Tensor::scalar(det_sum(self.value(x).data()));
        let n = self.value(x).len();
        let bw = self
            .any_requires_grad(&[x])
            .then(|| Box::new(move |ctx: &BackwardCtx<'_, T>| vec![Some(vec![ctx.grad[0]; n])]) as _);
        self.push("sum", out, &[x], bw)
    }

    pub fn mean(&mut self, x: Var) -> Result<Var> {
        let n = self.value(x).len();
        let s = self.sum(x)?;
        self.scale(s, 1.0 / n as f64)
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let out = self.value(x).clone().reshape(shape)?;
        let bw = self
            .any_requires_grad(&[x])
            .then(|| Box::new(|ctx: &BackwardCtx<'_, T>| vec![Some(ctx.grad.to_vec())]) as _);
        self.push("reshape", out, &[x], bw)
    }

    /// Concatenation along `axis`; all other extents must agree.
    pub fn concat(&mut self, xs: &[Var], axis: usize) -> Result<Var> {
        let first = *xs.first().ok_or_else(|| Error::Usage("concat of zero tensors".into()))?;
        let base = self.shape(first).to_vec();
        if axis >= base.len() {
            return Err(Error::Usage(format!("concat axis {axis} out of range for {base:?}")));
        }
        let mut extents = Vec::with_capacity(xs.len());
        for &x in xs {
            let s = self.shape(x);
            let compatible =
                s.len() == base.len() && s.iter().zip(&base).enumerate().all(|(i, (a, b))| i == axis || a == b);
            if !compatible {
                return Err(Error::shape("concat", &base, s));
            }
            extents.push(s[axis]);
        }
        let (outer, _, inner) = split_axis(&base, axis);
        let total: usize = extents.iter().sum();
        let mut shape = base.clone();
        shape[axis] = total;
        let mut data = Vec::with_capacity(numel(&shape));
        for o in 0..outer {
            for (&x, &ext) in xs.iter().zip(&extents) {
                let block = ext * inner;
                data.extend_from_slice(&self.value(x).data()[o * block..(o + 1) * block]);
            }
        }
        let out = Tensor::new(&shape, data)?;
        let bw = self.any_requires_grad(xs).then(|| {
            Box::new(move |ctx: &BackwardCtx<'_, T>| {
                let mut grads: Vec<Vec<T>> = extents.iter().map(|&e| Vec::with_capacity(outer * e * inner)).collect();
                let mut offset = 0;
                for _ in 0..outer {
                    for (g, &ext) in grads.iter_mut().zip(&extents) {
                        let block = ext * inner;
                        g.extend_from_slice(&ctx.grad[offset..offset + block]);
                        offset += block;
                    }
                }
                grads.into_iter().zip(&ctx.needs).map(|(g, &need)| need.then_some(g)).collect()
            }) as _
        });
        self.push("concat", out, xs, bw)
    }

    /// Slice `[start, start + len)` along `axis`.
    pub fn narrow(&mut self, x: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        if axis >= shape.len() || len == 0 || start + len > shape[axis] {
            return Err(Error::Usage(format!(
                "narrow axis {axis} [{start}, {}) out of range for {shape:?}",
                start + len
            )));
        }
        let (outer, ext, inner) = split_axis(&shape, axis);
        let mut out_shape = shape.clone();
        out_shape[axis] = len;
        let src = self.value(x).data();
        let mut data = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = o * ext * inner + start * inner;
            data.extend_from_slice(&src[base..base + len * inner]);
        }
        let out = Tensor::new(&out_shape, data)?;
        let bw = self.any_requires_grad(&[x]).then(|| {
            Box::new(move |ctx: &BackwardCtx<'_, T>| {
                let mut g = vec![T::zero(); outer * ext * inner];
                for o in 0..outer {
                    let base = o * ext * inner + start * inner;
                    g[base..base + len * inner].copy_from_slice(&ctx.grad[o * len * inner..(o + 1) * len * inner]);
                }
                vec![Some(g)]
            }) as _
        });
        self.push("narrow", out, &[x], bw)
    }

    /// `[..., A, B] -> [..., B, A]`. Converts token layout `[N, L, C]` to
    /// channel-first `[N, C, L]` and back.
    pub fn swap_last_axes(&mut self, x: Var) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        if shape.len() < 2 {
            return Err(Error::Usage(format!("swap_last_axes on rank-{} tensor", shape.len())));
        }
        let r = shape.len();
        let (a, b) = (shape[r - 2], shape[r - 1]);
        let batch = numel(&shape[..r - 2]);
        let swap = move |src: &[T]| {
            let mut dst = vec![T::zero(); src.len()];
            for n in 0..batch {
                let s = &src[n * a * b..(n + 1) * a * b];
                let d = &mut dst[n * a * b..(n + 1) * a * b];
                for i in 0..a {
                    for j in 0..b {
                        d[j * a + i] = s[i * b + j];
                    }
                }
            }
            dst
        };
        let mut out_shape = shape.clone();
        out_shape.swap(r - 2, r - 1);
        let out = Tensor::new(&out_shape, swap(self.value(x).data()))?;
        let bw = self.any_requires_grad(&[x]).then(|| {
            // the adjoint swaps back: reuse the kernel with roles exchanged
            Box::new(move |ctx: &BackwardCtx<'_, T>| {
                let mut g = vec![T::zero(); ctx.grad.len()];
                for n in 0..batch {
                    let s = &ctx.grad[n * a * b..(n + 1) * a * b];
                    let d = &mut g[n * a * b..(n + 1) * a * b];
                    for i in 0..a {
                        for j in 0..b {
                            d[i * b + j] = s[j * a + i];
                        }
                    }
                }
                vec![Some(g)]
            }) as _
        });
        self.push("swap_last_axes", out, &[x], bw)
    }

    /// `x[n, c, ...] * gate[n, c]`, the gate broadcast over trailing axes.
    pub fn scale_channels(&mut self, x: Var, gate: Var) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let gs = self.shape(gate).to_vec();
        if xs.len() < 2 || gs != xs[..2] {
            return Err(Error::shape("scale_channels", &xs, &gs));
        }
        let inner: usize = xs[2..].iter().product();
        let xv = self.value(x).data();
        let gv = self.value(gate).data();
        let data = xv.chunks(inner).zip(gv).flat_map(|(plane, &g)| plane.iter().map(move |&v| v * g)).collect();
        let out = Tensor::new(&xs, data)?;
        let bw = self.any_requires_grad(&[x, gate]).then(|| {
            Box::new(move |ctx: &BackwardCtx<'_, T>| {
                let (xv, gv) = (ctx.inputs[0].data(), ctx.inputs[1].data());
                let dx = ctx.needs[0].then(|| {
                    ctx.grad.chunks(inner).zip(gv).flat_map(|(plane, &g)| plane.iter().map(move |&d| d * g)).collect()
                });
                let dg = ctx.needs[1].then(|| {
                    ctx.grad
                        .chunks(inner)
                        .zip(xv.chunks(inner))
                        .map(|(d, x)| d.iter().zip(x).fold(T::zero(), |acc, (&d, &x)| acc + d * x))
                        .collect()
                });
                vec![dx, dg]
            }) as _
        });
        self.push("scale_channels", out, &[x, gate], bw)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], data: &[f64]) -> Tensor<f64> {
        Tensor::from_f64(shape, data).unwrap()
    }

    #[test]
    fn sum_of_squares_gradient_is_twice_input() {
        let mut g = Graph::<f64>::new();
        let x = g.leaf(t(&[3], &[1.0, -2.0, 0.5]), true);
        let sq = g.square(x).unwrap();
        let s = g.sum(sq).unwrap();
        g.backward(s).unwrap();
        assert_eq!(g.grad(x).unwrap(), &[2.0, -4.0, 1.0]);
    }

    #[test]
    fn unreached_leaf_has_zero_grad() {
        let mut g = Graph::<f64>::new();
        let x = g.leaf(t(&[2], &[1.0, 2.0]), true);
        let y = g.leaf(t(&[2], &[3.0, 4.0]), true);
        let s = g.sum(x).unwrap();
        g.backward(s).unwrap();
        assert_eq!(g.grad_tensor(y).data(), &[0.0, 0.0]);
    }

    #[test]
    fn repeated_backward_accumulates() {
        let mut g = Graph::<f64>::new();
        let x = g.leaf(t(&[2], &[1.0, 2.0]), true);
        let s = g.sum(x).unwrap();
        g.backward(s).unwrap();
        g.backward(s).unwrap();
        assert_eq!(g.grad(x).unwrap(), &[2.0, 2.0]);
        g.zero_grad();
        assert!(g.grad(x).is_none());
    }

    #[test]
    fn backward_rejects_non_scalar_root() {
        let mut g = Graph::<f64>::new();
        let x = g.leaf(t(&[2], &[1.0, 2.0]), true);
        let y = g.square(x).unwrap();
        assert!(matches!(g.backward(y), Err(Error::Usage(_))));
    }

    #[test]
    fn shape_mismatch_reports_both_shapes() {
        let mut g = Graph::<f64>::new();
        let a = g.constant(Tensor::zeros(&[2, 3]));
        let b = g.constant(Tensor::zeros(&[3, 2]));
        match g.add(a, b) {
            Err(Error::Shape { lhs, rhs, .. }) => {
                assert_eq!(lhs, vec![2, 3]);
                assert_eq!(rhs, vec![3, 2]);
            }
            other => panic!("expected shape error, got {other:?}"),
        }
    }

    #[test]
    fn finite_check_names_the_op() {
        let mut g = Graph::<f64>::new().with_finite_check(true);
        let x = g.constant(t(&[1], &[800.0]));
        let err = g.unary("exp", x, |v| v.exp(), |_, y| y).unwrap_err();
        assert!(matches!(err, Error::NonFinite { ref op } if op == "exp"));
    }

    #[test]
    fn concat_narrow_roundtrip() {
        let mut g = Graph::<f64>::new();
        let a = g.constant(t(&[2, 1, 2], &[1., 2., 3., 4.]));
        let b = g.constant(t(&[2, 2, 2], &[5., 6., 7., 8., 9., 10., 11., 12.]));
        let c = g.concat(&[a, b], 1).unwrap();
        assert_eq!(g.shape(c), &[2, 3, 2]);
        assert_eq!(g.value(c).data(), &[1., 2., 5., 6., 7., 8., 3., 4., 9., 10., 11., 12.]);
        let back = g.narrow(c, 1, 1, 2).unwrap();
        assert!(g.value(back).bit_eq(g.value(b)));
    }

    #[test]
    fn swap_last_axes_transposes_each_batch() {
        let mut g = Graph::<f64>::new();
        let x = g.constant(t(&[1, 2, 3], &[1., 2., 3., 4., 5., 6.]));
        let y = g.swap_last_axes(x).unwrap();
        assert_eq!(g.shape(y), &[1, 3, 2]);
        assert_eq!(g.value(y).data(), &[1., 4., 2., 5., 3., 6.]);
    }

    #[test]
    fn sigmoid_is_stable_at_extremes() {
        assert_eq!(sigmoid(1000.0f64), 1.0);
        assert_eq!(sigmoid(-1000.0f64), 0.0);
        assert!((sigmoid(0.0f64) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn elementwise_commutes_with_reshape() {
        let data: Vec<f64> = (0..24).map(|i| (i as f64 * 0.7).sin() * 3.0).collect();
        let mut g = Graph::<f64>::new();
        let x = g.constant(t(&[2, 3, 4], &data));
        let a = g.gelu(x).unwrap();
        let a = g.reshape(a, &[6, 4]).unwrap();
        let r = g.reshape(x, &[6, 4]).unwrap();
        let b = g.gelu(r).unwrap();
        assert!(g.value(a).bit_eq(g.value(b)));
    }
}

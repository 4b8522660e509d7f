use crate::autograd::{BackwardCtx, Graph, Var};
use crate::error::{Error, Result};
use crate::tensor::kernels::{gemm, gemm_nt, gemm_tn};
use crate::tensor::{Element, Tensor};

impl<T: Element> Graph<T> {
    /// `[M, K] × [K, N] -> [M, N]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::shape("matmul", &sa, &sb));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut c = vec![T::zero(); m * n];
        gemm(m, k, n, self.value(a).data(), self.value(b).data(), &mut c, false);
        let out = Tensor::new(&[m, n], c)?;
        let bw = self.any_requires_grad(&[a, b]).then(|| {
            Box::new(move |ctx: &BackwardCtx<'_, T>| {
                let (av, bv) = (ctx.inputs[0].data(), ctx.inputs[1].data());
                let da = ctx.needs[0].then(|| {
                    let mut da = vec![T::zero(); m * k];
                    gemm_nt(m, n, k, ctx.grad, bv, &mut da, false);
                    da
                });
                let db = ctx.needs[1].then(|| {
                    let mut db = vec![T::zero(); k * n];
                    gemm_tn(k, m, n, av, ctx.grad, &mut db, false);
                    db
                });
                vec![da, db]
            }) as _
        });
        self.push("matmul", out, &[a, b], bw)
    }

    /// Affine map over the last axis: `x[..., in] · w[in, out] + b[out]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (sx, sw, sb) = (self.shape(x).to_vec(), self.shape(w).to_vec(), self.shape(b).to_vec());
        let cin = *sx.last().unwrap_or(&0);
        if sw.len() != 2 || sw[0] != cin {
            return Err(Error::shape("linear", &sx, &sw));
        }
        let cout = sw[1];
        if sb != [cout] {
            return Err(Error::shape("linear", &sw, &sb));
        }
        let rows = self.value(x).len() / cin;
        let mut y = vec![T::zero(); rows * cout];
        for row in y.chunks_mut(cout) {
            row.copy_from_slice(self.value(b).data());
        }
        gemm(rows, cin, cout, self.value(x).data(), self.value(w).data(), &mut y, true);
        let mut out_shape = sx.clone();
        *out_shape.last_mut().unwrap() = cout;
        let out = Tensor::new(&out_shape, y)?;
        let bw = self.any_requires_grad(&[x, w, b]).then(|| {
            Box::new(move |ctx: &BackwardCtx<'_, T>| {
                let (xv, wv) = (ctx.inputs[0].data(), ctx.inputs[1].data());
                let dx = ctx.needs[0].then(|| {
                    let mut dx = vec![T::zero(); rows * cin];
                    gemm_nt(rows, cout, cin, ctx.grad, wv, &mut dx, false);
                    dx
                });
                let dw = ctx.needs[1].then(|| {
                    let mut dw = vec![T::zero(); cin * cout];
                    gemm_tn(cin, rows, cout, xv, ctx.grad, &mut dw, false);
                    dw
                });
                let db = ctx.needs[2].then(|| {
                    let mut db = vec![T::zero(); cout];
                    for row in ctx.grad.chunks(cout) {
                        db.iter_mut().zip(row).for_each(|(a, &g)| *a += g);
                    }
                    db
                });
                vec![dx, dw, db]
            }) as _
        });
        self.push("linear", out, &[x, w, b], bw)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_times_matrix() {
        let mut g = Graph::<f64>::new();
        let i = g.constant(Tensor::from_f64(&[2, 2], &[1., 0., 0., 1.]).unwrap());
        let b = g.constant(Tensor::from_f64(&[2, 2], &[5., 6., 7., 8.]).unwrap());
        let c = g.matmul(i, b).unwrap();
        assert_eq!(g.value(c).data(), &[5., 6., 7., 8.]);
    }

    #[test]
    fn two_by_two_product() {
        // naive triple loop: [[1*5+2*7, 1*6+2*8], [3*5+4*7, 3*6+4*8]]
        let mut g = Graph::<f64>::new();
        let a = g.constant(Tensor::from_f64(&[2, 2], &[1., 2., 3., 4.]).unwrap());
        let b = g.constant(Tensor::from_f64(&[2, 2], &[5., 6., 7., 8.]).unwrap());
        let c = g.matmul(a, b).unwrap();
        assert_eq!(g.value(c).data(), &[19., 22., 43., 50.]);
    }

    #[test]
    fn sum_gradient_with_ones_is_n() {
        let (m, k, n) = (3, 4, 5);
        let mut g = Graph::<f64>::new();
        let a = g.leaf(Tensor::from_f64(&[m, k], &vec![0.3; m * k]).unwrap(), true);
        let b = g.constant(Tensor::ones(&[k, n]));
        let c = g.matmul(a, b).unwrap();
        let s = g.sum(c).unwrap();
        g.backward(s).unwrap();
        assert!(g.grad(a).unwrap().iter().all(|&v| v == n as f64));
    }

    #[test]
    fn mismatched_inner_dims() {
        let mut g = Graph::<f32>::new();
        let a = g.constant(Tensor::zeros(&[2, 3]));
        let b = g.constant(Tensor::zeros(&[2, 3]));
        assert!(matches!(g.matmul(a, b), Err(Error::Shape { .. })));
    }
}

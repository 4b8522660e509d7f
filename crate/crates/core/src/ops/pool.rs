use crate::autograd::{BackwardCtx, Graph, Var};
use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};

impl<T: Element> Graph<T> {
    fn pooled_dims(&self, op: &'static str, x: Var) -> Result<(usize, usize, usize)> {
        let s = self.shape(x);
        if s.len() < 3 {
            return Err(Error::shape(op, s, &[]));
        }
        Ok((s[0], s[1], s[2..].iter().product()))
    }

    /// Mean over all spatial positions: `[N, C, ...] -> [N, C]`.
    pub fn global_avg_pool(&mut self, x: Var) -> Result<Var> {
        let (n, c, hw) = self.pooled_dims("global_avg_pool", x)?;
        let inv = T::of(1.0 / hw as f64);
        let data = self.value(x).data().chunks(hw).map(|p| p.iter().fold(T::zero(), |s, &v| s + v) * inv).collect();
        let out = Tensor::new(&[n, c], data)?;
        let bw = self.any_requires_grad(&[x]).then(|| {
            Box::new(move |ctx: &BackwardCtx<'_, T>| {
                let dx = ctx.grad.iter().flat_map(|&g| std::iter::repeat(g * inv).take(hw)).collect();
                vec![Some(dx)]
            }) as _
        });
        self.push("global_avg_pool", out, &[x], bw)
    }

    /// Max over all spatial positions: `[N, C, ...] -> [N, C]`. The gradient
    /// flows to the first maximal position.
    pub fn global_max_pool(&mut self, x: Var) -> Result<Var> {
        let (n, c, hw) = self.pooled_dims("global_max_pool", x)?;
        let mut argmax = Vec::with_capacity(n * c);
        let mut data = Vec::with_capacity(n * c);
        for p in self.value(x).data().chunks(hw) {
            let (mut best, mut at) = (p[0], 0);
            for (i, &v) in p.iter().enumerate().skip(1) {
                if v > best {
                    best = v;
                    at = i;
                }
            }
            data.push(best);
            argmax.push(at);
        }
        let out = Tensor::new(&[n, c], data)?;
        let bw = self.any_requires_grad(&[x]).then(|| {
            Box::new(move |ctx: &BackwardCtx<'_, T>| {
                let mut dx = vec![T::zero(); n * c * hw];
                for (p, (&g, &at)) in ctx.grad.iter().zip(&argmax).enumerate() {
                    dx[p * hw + at] = g;
                }
                vec![Some(dx)]
            }) as _
        });
        self.push("global_max_pool", out, &[x], bw)
    }
}

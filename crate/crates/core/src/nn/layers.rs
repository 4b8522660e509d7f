use crate::autograd::{Graph, Var};
use crate::error::Result;
use crate::ops::Conv2dSpec;
use crate::params::{Binding, ParamBuilder, ParamId, PROJ_INIT_STD};
use crate::tensor::Element;

/// Affine map over the last axis, weight stored `[in, out]`.
#[derive(Debug, Clone)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
}

impl Linear {
    pub fn new<T: Element>(b: &mut ParamBuilder<'_, T>, name: &str, cin: usize, cout: usize) -> Self {
        let mut s = b.scope(name);
        Self { weight: s.trunc_normal("weight", &[cin, cout], PROJ_INIT_STD), bias: s.zeros("bias", &[cout]) }
    }

    pub fn forward<T: Element>(&self, g: &mut Graph<T>, p: &Binding, x: Var) -> Result<Var> {
        g.linear(x, p[self.weight], p[self.bias])
    }
}

#[derive(Debug, Clone)]
pub struct Conv {
    pub weight: ParamId,
    pub bias: ParamId,
    pub spec: Conv2dSpec,
}

impl Conv {
    pub fn new<T: Element>(
        b: &mut ParamBuilder<'_, T>,
        name: &str,
        cin: usize,
        cout: usize,
        kernel: usize,
        spec: Conv2dSpec,
    ) -> Self {
        let mut s = b.scope(name);
        Self {
            weight: s.conv_normal("weight", &[cout, cin / spec.groups, kernel, kernel], spec.groups),
            bias: s.zeros("bias", &[cout]),
            spec,
        }
    }

    pub fn forward<T: Element>(&self, g: &mut Graph<T>, p: &Binding, x: Var) -> Result<Var> {
        g.conv2d(x, p[self.weight], Some(p[self.bias]), self.spec)
    }
}

pub const LN_EPS: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct Norm {
    pub gamma: ParamId,
    pub beta: ParamId,
}

impl Norm {
    pub fn new<T: Element>(b: &mut ParamBuilder<'_, T>, name: &str, c: usize) -> Self {
        let mut s = b.scope(name);
        Self { gamma: s.ones("weight", &[c]), beta: s.zeros("bias", &[c]) }
    }

    pub fn forward<T: Element>(&self, g: &mut Graph<T>, p: &Binding, x: Var) -> Result<Var> {
        g.layer_norm(x, p[self.gamma], p[self.beta], LN_EPS)
    }
}

/// `[N, C, H, W] -> [N, H·W, C]`.
pub fn to_tokens<T: Element>(g: &mut Graph<T>, x: Var) -> Result<Var> {
    let s = g.shape(x).to_vec();
    let flat = g.reshape(x, &[s[0], s[1], s[2] * s[3]])?;
    g.swap_last_axes(flat)
}

/// `[N, H·W, C] -> [N, C, H, W]`.
pub fn to_spatial<T: Element>(g: &mut Graph<T>, x: Var, h: usize, w: usize) -> Result<Var> {
    let s = g.shape(x).to_vec();
    let cf = g.swap_last_axes(x)?;
    g.reshape(cf, &[s[0], s[2], h, w])
}

//! Named parameter storage and seeded initialization.

use std::ops::Index;

use crate::autograd::{Graph, Var};
use crate::rng::SplitMix64;
use crate::tensor::{numel, Element, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Param<T> {
    pub name: String,
    pub value: Tensor<T>,
}

/// Ordered collection of named parameter tensors. Order is creation order
/// and is the order used by checkpoints and the optimizer.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamStore<T> {
    params: Vec<Param<T>>,
}

impl<T: Element> ParamStore<T> {
    pub fn new() -> Self {
        Self { params: Vec::new() }
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor<T>) -> ParamId {
        let name = name.into();
        assert!(self.find(&name).is_none(), "duplicate parameter name {name}");
        self.params.push(Param { name, value });
        ParamId(self.params.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param<T>> {
        self.params.iter()
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.params[id.0].name
    }

    pub fn value(&self, id: ParamId) -> &Tensor<T> {
        &self.params[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.params[id.0].value
    }

    /// Registers every parameter as a leaf of `g`.
    pub fn bind(&self, g: &mut Graph<T>, requires_grad: bool) -> Binding {
        Binding { vars: self.params.iter().map(|p| g.leaf(p.value.clone(), requires_grad)).collect() }
    }

    /// Gradients of a bound store after `g.backward`, in parameter order.
    pub fn grads(&self, g: &Graph<T>, binding: &Binding) -> Vec<Tensor<T>> {
        binding.vars.iter().map(|&v| g.grad_tensor(v)).collect()
    }

    pub fn cast<U: Element>(&self) -> ParamStore<U> {
        ParamStore {
            params: self.params.iter().map(|p| Param { name: p.name.clone(), value: p.value.cast() }).collect(),
        }
    }

    /// True when both stores hold the same names, shapes and bit patterns.
    pub fn bit_eq(&self, other: &Self) -> bool {
        self.params.len() == other.params.len()
            && self.params.iter().zip(&other.params).all(|(a, b)| a.name == b.name && a.value.bit_eq(&b.value))
    }
}

/// Graph variables of a bound [`ParamStore`], indexed by [`ParamId`].
#[derive(Debug, Clone)]
pub struct Binding {
    vars: Vec<Var>,
}

impl Binding {
    pub fn vars(&self) -> &[Var] {
        &self.vars
    }
}

impl Index<ParamId> for Binding {
    type Output = Var;
    fn index(&self, id: ParamId) -> &Var {
        &self.vars[id.0]
    }
}

/// Std of projection weights.
pub const PROJ_INIT_STD: f64 = 0.02;

/// Creates parameters under a dotted name prefix, drawing initial values
/// from a shared generator. Values are drawn in f64 and rounded to `T`, so
/// f32 and f64 models built from one seed agree up to rounding.
pub struct ParamBuilder<'a, T> {
    store: &'a mut ParamStore<T>,
    rng: &'a mut SplitMix64,
    prefix: String,
}

impl<'a, T: Element> ParamBuilder<'a, T> {
    pub fn new(store: &'a mut ParamStore<T>, rng: &'a mut SplitMix64) -> Self {
        Self { store, rng, prefix: String::new() }
    }

    pub fn scope(&mut self, name: &str) -> ParamBuilder<'_, T> {
        let prefix = self.full_name(name);
        ParamBuilder { store: self.store, rng: self.rng, prefix }
    }

    fn full_name(&self, name: &str) -> String {
        if self.prefix.is_empty() {
            name.to_string()
        } else {
            format!("{}.{name}", self.prefix)
        }
    }

    fn add_with(&mut self, name: &str, shape: &[usize], mut draw: impl FnMut(&mut SplitMix64) -> f64) -> ParamId {
        let data: Vec<T> = (0..numel(shape)).map(|_| T::of(draw(self.rng))).collect();
        let full = self.full_name(name);
        self.store.add(full, Tensor::new(shape, data).expect("valid parameter shape"))
    }

    pub fn trunc_normal(&mut self, name: &str, shape: &[usize], std: f64) -> ParamId {
        self.add_with(name, shape, |r| r.next_trunc_normal(std))
    }

    /// Normal with std `sqrt(2 / fan_out)`, `fan_out = kh·kw·out / groups`,
    /// for a weight shaped `[out, in/groups, kh, kw]`.
    pub fn conv_normal(&mut self, name: &str, shape: &[usize], groups: usize) -> ParamId {
        let fan_out = (shape[0] * shape[2] * shape[3]) as f64 / groups as f64;
        let std = (2.0 / fan_out).sqrt();
        self.add_with(name, shape, |r| r.next_normal() * std)
    }

    pub fn zeros(&mut self, name: &str, shape: &[usize]) -> ParamId {
        self.add_with(name, shape, |_| 0.0)
    }

    pub fn ones(&mut self, name: &str, shape: &[usize]) -> ParamId {
        self.add_with(name, shape, |_| 1.0)
    }
}

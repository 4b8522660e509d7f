//! Central finite-difference gradient checks in f64.

use std::fmt::Write as _;

use crate::autograd::{Graph, Var};
use crate::config::RunConfig;
use crate::data::synth_scene;
use crate::data::Batch;
use crate::error::{Error, Result};
use crate::loss::compound_loss;
use crate::nn::DamFormer;
use crate::params::ParamStore;
use crate::rng::SplitMix64;
use crate::tensor::Tensor;

/// Finite-difference step.
pub const STEP: f64 = 1e-3;
/// Gradients smaller than this are compared on an absolute scale.
pub const ABS_FLOOR: f64 = 1e-6;
/// Disagreement between the two step sizes that marks a non-smooth point.
const KINK_ABS: f64 = 1e-8;
const KINK_REL: f64 = 1e-4;

/// Fourth-order central difference
/// `(8(f(x+h) − f(x−h)) − (f(x+2h) − f(x−2h))) / 12h`.
fn stencil(x: f64, h: f64, f: &mut impl FnMut(f64) -> Result<f64>) -> Result<f64> {
    let near = f(x + h)? - f(x - h)?;
    let far = f(x + 2.0 * h)? - f(x - 2.0 * h)?;
    Ok((8.0 * near - far) / (12.0 * h))
}

/// Numerical derivative at `x`: the stencils at `STEP` and `STEP / 2`
/// combined to cancel their leading error term. `None` when the two
/// disagree, meaning a kink (ReLU, max, sort order) lies inside the stencil.
pub fn central_difference(x: f64, mut f: impl FnMut(f64) -> Result<f64>) -> Result<Option<f64>> {
    let coarse = stencil(x, STEP, &mut f)?;
    let fine = stencil(x, STEP / 2.0, &mut f)?;
    let smooth = (coarse - fine).abs() <= KINK_ABS + KINK_REL * coarse.abs().max(fine.abs());
    Ok(smooth.then_some((16.0 * fine - coarse) / 15.0))
}

/// `|a − n| / max(|a|, |n|, ABS_FLOOR)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(ABS_FLOOR)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TensorCheck {
    pub name: String,
    pub checked: usize,
    /// Entries left out because the loss is not smooth around them.
    pub skipped: usize,
    pub max_abs_err: f64,
    pub max_rel_err: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct GradCheckReport {
    pub tensors: Vec<TensorCheck>,
}

impl GradCheckReport {
    pub fn max_rel_err(&self) -> f64 {
        self.tensors.iter().map(|t| t.max_rel_err).fold(0.0, f64::max)
    }

    pub fn worst(&self) -> Option<&TensorCheck> {
        self.tensors.iter().max_by(|a, b| a.max_rel_err.total_cmp(&b.max_rel_err))
    }

    pub fn checked(&self) -> usize {
        self.tensors.iter().map(|t| t.checked).sum()
    }

    pub fn skipped(&self) -> usize {
        self.tensors.iter().map(|t| t.skipped).sum()
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        for t in &self.tensors {
            let _ = writeln!(
                s,
                "{:<48} n={:<3} skip={:<2} abs={:.3e} rel={:.3e}",
                t.name, t.checked, t.skipped, t.max_abs_err, t.max_rel_err
            );
        }
        let _ = writeln!(
            s,
            "checked {} entries ({} skipped at kinks), max relative error {:.3e}",
            self.checked(),
            self.skipped(),
            self.max_rel_err()
        );
        s
    }
}

/// Entries of a tensor of length `len` to probe: all of them, or
/// `limit` distinct seeded picks.
fn pick_entries(len: usize, limit: Option<usize>, rng: &mut SplitMix64) -> Vec<usize> {
    match limit {
        Some(k) if k < len => {
            let mut all: Vec<usize> = (0..len).collect();
            rng.shuffle(&mut all);
            let mut picked = all[..k].to_vec();
            picked.sort_unstable();
            picked
        }
        _ => (0..len).collect(),
    }
}

/// Reduces a non-scalar output to a scalar with fixed pseudo-random weights.
fn scalarize(g: &mut Graph<f64>, out: Var, seed: u64) -> Result<Var> {
    if g.value(out).len() == 1 && g.shape(out).iter().all(|&d| d == 1) {
        return g.sum(out);
    }
    let mut rng = SplitMix64::for_stream(seed, 0x5ca1a);
    let shape = g.shape(out).to_vec();
    let w: Vec<f64> = (0..g.value(out).len()).map(|_| rng.next_f64() * 2.0 - 1.0).collect();
    let w = g.constant(Tensor::new(&shape, w)?);
    let y = g.mul(out, w)?;
    g.sum(y)
}

fn compare(
    name: String,
    analytic: &[f64],
    entries: &[usize],
    mut numeric: impl FnMut(usize) -> Result<Option<f64>>,
) -> Result<TensorCheck> {
    let mut check = TensorCheck { name, checked: 0, skipped: 0, max_abs_err: 0.0, max_rel_err: 0.0 };
    for &j in entries {
        let Some(n) = numeric(j)? else {
            check.skipped += 1;
            continue;
        };
        let a = analytic[j];
        check.checked += 1;
        check.max_abs_err = check.max_abs_err.max((a - n).abs());
        check.max_rel_err = check.max_rel_err.max(relative_error(a, n));
    }
    Ok(check)
}

/// Checks `f` against central differences with respect to each named input.
/// Non-scalar outputs are contracted with fixed random weights first.
/// `limit` caps the probed entries per input.
pub fn check_fn<F>(inputs: &[(&str, Tensor<f64>)], f: F, limit: Option<usize>, seed: u64) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph<f64>, &[Var]) -> Result<Var>,
{
    let eval = |values: &[Tensor<f64>]| -> Result<f64> {
        let mut g = Graph::new();
        let vars: Vec<Var> = values.iter().map(|t| g.constant(t.clone())).collect();
        let out = f(&mut g, &vars)?;
        let s = scalarize(&mut g, out, seed)?;
        Ok(g.value(s).item())
    };

    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|(_, t)| g.leaf(t.clone(), true)).collect();
    let out = f(&mut g, &vars)?;
    let s = scalarize(&mut g, out, seed)?;
    g.backward(s)?;

    let mut values: Vec<Tensor<f64>> = inputs.iter().map(|(_, t)| t.clone()).collect();
    let mut rng = SplitMix64::for_stream(seed, 0xe17);
    let mut report = GradCheckReport::default();
    for (i, (name, t)) in inputs.iter().enumerate() {
        let analytic = g.grad_tensor(vars[i]).into_data();
        let entries = pick_entries(t.len(), limit, &mut rng);
        let check = compare(name.to_string(), &analytic, &entries, |j| {
            let orig = values[i].data()[j];
            let d = central_difference(orig, |x| {
                values[i].data_mut()[j] = x;
                eval(&values)
            });
            values[i].data_mut()[j] = orig;
            d
        })?;
        report.tensors.push(check);
    }
    Ok(report)
}

/// Full-model check: the compound loss of an f64 model built from `run` on
/// synthetic scene 0, probing up to `per_tensor` entries of every parameter.
///
/// The Lovász term is left out. Over a whole image its sort order changes
/// within any usable step, so differences average over many linear pieces.
/// It is checked on its own on small tie-free inputs instead.
pub fn check_model(run: &RunConfig, per_tensor: usize) -> Result<GradCheckReport> {
    run.validate()?;
    let mut loss_cfg = run.loss.clone();
    loss_cfg.lovasz_weight = 0.0;
    let (model, mut store) = DamFormer::init::<f64>(&run.model, run.seed)?;
    let sample = synth_scene(&run.synth(), 0)?;
    let batch: Batch<f64> = Batch::from_samples(&[&sample])?;

    let loss = |store: &ParamStore<f64>, grad: bool| -> Result<(f64, Vec<Tensor<f64>>)> {
        let mut g = Graph::new();
        let p = store.bind(&mut g, grad);
        let pre = g.constant(batch.pre.clone());
        let post = g.constant(batch.post.clone());
        let out = model.forward(&mut g, &p, pre, post)?;
        let terms = compound_loss(&mut g, out.loc_logits, out.dam_logits, &batch.loc, &batch.dam, &loss_cfg)?;
        let value = g.value(terms.total).item();
        if !value.is_finite() {
            return Err(Error::NonFinite { op: "gradcheck loss".into() });
        }
        let grads = if grad {
            g.backward(terms.total)?;
            store.grads(&g, &p)
        } else {
            Vec::new()
        };
        Ok((value, grads))
    };

    let (_, grads) = loss(&store, true)?;
    let mut rng = SplitMix64::for_stream(run.seed, 0x9c);
    let ids: Vec<_> = store.ids().collect();
    let mut report = GradCheckReport::default();
    for (id, analytic) in ids.into_iter().zip(&grads) {
        let entries = pick_entries(analytic.len(), Some(per_tensor), &mut rng);
        let name = store.name(id).to_string();
        let check = compare(name, analytic.data(), &entries, |j| {
            let orig = store.value(id).data()[j];
            let d = central_difference(orig, |x| {
                store.value_mut(id).data_mut()[j] = x;
                Ok(loss(&store, false)?.0)
            });
            store.value_mut(id).data_mut()[j] = orig;
            d
        })?;
        report.tensors.push(check);
    }
    Ok(report)
}

//! Training objective: BCE + Dice on the localization logits, cross-entropy
//! + Lovász-softmax on the damage logits, `L = L_loc + α·L_dam`.
//!
//! Each loss is one fused graph node with a hand-written backward rule.

use std::cmp::Ordering;

use crate::autograd::{BackwardCtx, Graph, Var};
use crate::config::{LossConfig, LovaszClasses, DAMAGE_CLASSES};
use crate::error::{Error, Result};
use crate::mask::Mask;
use crate::ops::basic::sigmoid;
use crate::ops::norm::softmax_strided;
use crate::tensor::kernels::det_sum;
use crate::tensor::{Element, Tensor};

/// Checks `logits[N, C, H, W]` against `mask[N, H, W]`; returns `(N, H·W)`.
fn check_pair(op: &'static str, logits: &[usize], classes: usize, mask: &Mask) -> Result<(usize, usize)> {
    let m = mask.shape();
    if logits.len() != 4 || m.len() != 3 || logits[0] != m[0] || logits[2..] != m[1..] {
        return Err(Error::shape(op, logits, m));
    }
    if logits[1] != classes {
        return Err(Error::Input(format!("{op}: expected {classes} channels, got {}", logits[1])));
    }
    Ok((m[0], m[1] * m[2]))
}

fn labels_as<T: Element>(mask: &Mask) -> Vec<T> {
    mask.data().iter().map(|&v| T::of(v as f64)).collect()
}

/// Dice loss `1 − (2Σpy + ε)/(Σp + Σy + ε)` over probabilities `p`.
pub fn dice_value<T: Element>(p: &[T], y: &[T], eps: T) -> T {
    let py: Vec<T> = p.iter().zip(y).map(|(&a, &b)| a * b).collect();
    let two = T::of(2.0);
    T::one() - (two * det_sum(&py) + eps) / (det_sum(p) + det_sum(y) + eps)
}

/// Mean binary cross-entropy with logits, in the form
/// `max(z, 0) − z·y + ln(1 + e^{−|z|})`.
pub fn bce_loss<T: Element>(g: &mut Graph<T>, logits: Var, mask: &Mask) -> Result<Var> {
    check_pair("bce_loss", g.shape(logits), 1, mask)?;
    mask.check_max(1, "localization mask")?;
    let y: Vec<T> = labels_as(mask);
    let z = g.value(logits).data();
    let terms: Vec<T> = z.iter().zip(&y).map(|(&z, &y)| z.max(T::zero()) - z * y + (-z.abs()).exp().ln_1p()).collect();
    let count = T::of(z.len() as f64);
    let out = Tensor::scalar(det_sum(&terms) / count);
    let bw = g.any_requires_grad(&[logits]).then(|| {
        Box::new(move |ctx: &BackwardCtx<'_, T>| {
            let s = ctx.grad[0] / count;
            let z = ctx.inputs[0].data();
            vec![Some(z.iter().zip(&y).map(|(&z, &y)| (sigmoid(z) - y) * s).collect())]
        }) as _
    });
    g.push("bce_loss", out, &[logits], bw)
}

/// Batch-global Dice loss on `σ(logits)`.
pub fn dice_loss<T: Element>(g: &mut Graph<T>, logits: Var, mask: &Mask, eps: f64) -> Result<Var> {
    check_pair("dice_loss", g.shape(logits), 1, mask)?;
    mask.check_max(1, "localization mask")?;
    if !(eps > 0.0) {
        return Err(Error::Config(format!("dice smoothing must be positive, got {eps}")));
    }
    let eps = T::of(eps);
    let y: Vec<T> = labels_as(mask);
    let p: Vec<T> = g.value(logits).data().iter().map(|&z| sigmoid(z)).collect();
    let out = Tensor::scalar(dice_value(&p, &y, eps));
    let bw = g.any_requires_grad(&[logits]).then(|| {
        Box::new(move |ctx: &BackwardCtx<'_, T>| {
            let py: Vec<T> = p.iter().zip(&y).map(|(&a, &b)| a * b).collect();
            let two = T::of(2.0);
            let num = two * det_sum(&py) + eps;
            let den = det_sum(&p) + det_sum(&y) + eps;
            let s = ctx.grad[0] / (den * den);
            let grad = p.iter().zip(&y).map(|(&p, &y)| -(two * y * den - num) * s * p * (T::one() - p)).collect();
            vec![Some(grad)]
        }) as _
    });
    g.push("dice_loss", out, &[logits], bw)
}

/// Class probabilities along axis 1 of `[N, C, HW]` data.
fn class_softmax<T: Element>(z: &[T], n: usize, c: usize, hw: usize) -> Vec<T> {
    let mut p = vec![T::zero(); z.len()];
    for b in 0..n {
        let base = b * c * hw;
        for i in 0..hw {
            softmax_strided(&z[base + i..], c, hw, &mut p[base + i..]);
        }
    }
    p
}

/// Mean pixel cross-entropy `lse(z) − z_y`.
pub fn ce_loss<T: Element>(g: &mut Graph<T>, logits: Var, mask: &Mask) -> Result<Var> {
    let (n, hw) = check_pair("ce_loss", g.shape(logits), DAMAGE_CLASSES, mask)?;
    mask.check_max(DAMAGE_CLASSES as u8 - 1, "damage mask")?;
    let c = DAMAGE_CLASSES;
    let labels = mask.data().to_vec();
    let z = g.value(logits).data();
    let mut terms = Vec::with_capacity(n * hw);
    for b in 0..n {
        for i in 0..hw {
            let at = |k: usize| z[(b * c + k) * hw + i];
            let max = (0..c).map(at).fold(T::neg_infinity(), T::max);
            let lse = max + (0..c).map(|k| (at(k) - max).exp()).sum::<T>().ln();
            terms.push(lse - at(labels[b * hw + i] as usize));
        }
    }
    let count = T::of((n * hw) as f64);
    let out = Tensor::scalar(det_sum(&terms) / count);
    let bw = g.any_requires_grad(&[logits]).then(|| {
        Box::new(move |ctx: &BackwardCtx<'_, T>| {
            let s = ctx.grad[0] / count;
            let mut grad = class_softmax(ctx.inputs[0].data(), n, c, hw);
            for b in 0..n {
                for i in 0..hw {
                    grad[(b * c + labels[b * hw + i] as usize) * hw + i] -= T::one();
                }
            }
            grad.iter_mut().for_each(|v| *v *= s);
            vec![Some(grad)]
        }) as _
    });
    g.push("ce_loss", out, &[logits], bw)
}

/// Gradient of the Lovász extension of the Jaccard loss for ground truth
/// sorted by descending error: `g_1 = J_1`, `g_k = J_k − J_{k−1}`.
pub fn lovasz_grad<T: Element>(gt_sorted: &[bool]) -> Vec<T> {
    let total = gt_sorted.iter().filter(|&&v| v).count();
    let mut fg_seen = 0usize;
    let mut bg_seen = 0usize;
    let mut prev = T::zero();
    gt_sorted
        .iter()
        .map(|&fg| {
            if fg {
                fg_seen += 1;
            } else {
                bg_seen += 1;
            }
            let inter = T::of((total - fg_seen) as f64);
            let union = T::of((total + bg_seen) as f64);
            let jaccard = T::one() - inter / union;
            let step = jaccard - prev;
            prev = jaccard;
            step
        })
        .collect()
}

/// Per-class Lovász-softmax terms evaluated on probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct LovaszTerms<T> {
    /// Mean over the included classes.
    pub mean: T,
    /// `None` for classes skipped by the presence policy.
    pub per_class: Vec<Option<T>>,
}

/// Value and `∂mean/∂p` for probabilities laid out `[N, C, HW]`.
fn lovasz_core<T: Element>(
    probs: &[T],
    labels: &[u8],
    n: usize,
    c: usize,
    hw: usize,
    policy: LovaszClasses,
) -> (LovaszTerms<T>, Vec<T>) {
    let pixels = n * hw;
    let mut per_class = vec![None; c];
    let mut grad = vec![T::zero(); probs.len()];
    let index = |p: usize, k: usize| ((p / hw) * c + k) * hw + p % hw;
    for (k, slot) in per_class.iter_mut().enumerate() {
        let fg: Vec<bool> = labels.iter().map(|&l| l as usize == k).collect();
        if policy == LovaszClasses::Present && !fg.contains(&true) {
            continue;
        }
        let errors: Vec<T> = (0..pixels)
            .map(|p| {
                let pk = probs[index(p, k)];
                if fg[p] {
                    T::one() - pk
                } else {
                    pk
                }
            })
            .collect();
        let mut order: Vec<usize> = (0..pixels).collect();
        order.sort_by(|&a, &b| errors[b].partial_cmp(&errors[a]).unwrap_or(Ordering::Equal));
        let gt_sorted: Vec<bool> = order.iter().map(|&p| fg[p]).collect();
        let weights: Vec<T> = lovasz_grad(&gt_sorted);
        let products: Vec<T> = order.iter().zip(&weights).map(|(&p, &w)| errors[p] * w).collect();
        *slot = Some(det_sum(&products));
        for (&p, &w) in order.iter().zip(&weights) {
            grad[index(p, k)] += if fg[p] { -w } else { w };
        }
    }
    let included = per_class.iter().flatten().count();
    let mean = if included == 0 {
        T::zero()
    } else {
        let vals: Vec<T> = per_class.iter().flatten().copied().collect();
        det_sum(&vals) / T::of(included as f64)
    };
    if included > 0 {
        let s = T::one() / T::of(included as f64);
        grad.iter_mut().for_each(|v| *v *= s);
    }
    (LovaszTerms { mean, per_class }, grad)
}

/// Lovász-softmax evaluated directly on class probabilities `[N, C, H, W]`,
/// so hard (one-hot) predictions can be scored exactly.
pub fn lovasz_softmax_probs<T: Element>(
    probs: &Tensor<T>,
    mask: &Mask,
    policy: LovaszClasses,
) -> Result<LovaszTerms<T>> {
    let c = probs.shape().get(1).copied().unwrap_or(0);
    let (n, hw) = check_pair("lovasz_softmax", probs.shape(), c, mask)?;
    mask.check_max(c as u8 - 1, "class mask")?;
    Ok(lovasz_core(probs.data(), mask.data(), n, c, hw, policy).0)
}

/// Lovász-softmax on damage logits, averaged over the classes selected by `policy`.
pub fn lovasz_softmax<T: Element>(g: &mut Graph<T>, logits: Var, mask: &Mask, policy: LovaszClasses) -> Result<Var> {
    let (n, hw) = check_pair("lovasz_softmax", g.shape(logits), DAMAGE_CLASSES, mask)?;
    mask.check_max(DAMAGE_CLASSES as u8 - 1, "damage mask")?;
    let c = DAMAGE_CLASSES;
    let probs = class_softmax(g.value(logits).data(), n, c, hw);
    let (terms, dprobs) = lovasz_core(&probs, mask.data(), n, c, hw, policy);
    let out = Tensor::scalar(terms.mean);
    let bw = g.any_requires_grad(&[logits]).then(|| {
        Box::new(move |ctx: &BackwardCtx<'_, T>| {
            let mut grad = vec![T::zero(); probs.len()];
            for b in 0..n {
                for i in 0..hw {
                    let at = |k: usize| (b * c + k) * hw + i;
                    let dot: T = (0..c).map(|k| probs[at(k)] * dprobs[at(k)]).sum();
                    for k in 0..c {
                        grad[at(k)] = ctx.grad[0] * probs[at(k)] * (dprobs[at(k)] - dot);
                    }
                }
            }
            vec![Some(grad)]
        }) as _
    });
    g.push("lovasz_softmax", out, &[logits], bw)
}

/// `L_loc + α·L_dam`.
pub fn combine(l_loc: f64, l_dam: f64, alpha: f64) -> f64 {
    l_loc + alpha * l_dam
}

/// Graph nodes of every loss component.
#[derive(Debug, Clone, Copy)]
pub struct LossTerms {
    pub total: Var,
    pub loc: Var,
    pub dam: Var,
    pub bce: Var,
    pub dice: Var,
    pub ce: Var,
    pub lovasz: Var,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossBreakdown {
    pub total: f64,
    pub loc: f64,
    pub dam: f64,
    pub bce: f64,
    pub dice: f64,
    pub ce: f64,
    pub lovasz: f64,
}

impl LossTerms {
    pub fn values<T: Element>(&self, g: &Graph<T>) -> LossBreakdown {
        let v = |x: Var| g.value(x).item().as_f64();
        LossBreakdown {
            total: v(self.total),
            loc: v(self.loc),
            dam: v(self.dam),
            bce: v(self.bce),
            dice: v(self.dice),
            ce: v(self.ce),
            lovasz: v(self.lovasz),
        }
    }
}

pub fn compound_loss<T: Element>(
    g: &mut Graph<T>,
    loc_logits: Var,
    dam_logits: Var,
    loc_mask: &Mask,
    dam_mask: &Mask,
    cfg: &LossConfig,
) -> Result<LossTerms> {
    cfg.validate()?;
    let bce = bce_loss(g, loc_logits, loc_mask)?;
    let dice = dice_loss(g, loc_logits, loc_mask, cfg.dice_eps)?;
    let ce = ce_loss(g, dam_logits, dam_mask)?;
    let lovasz = lovasz_softmax(g, dam_logits, dam_mask, cfg.lovasz_classes)?;
    let weighted = |g: &mut Graph<T>, a: Var, wa: f64, b: Var, wb: f64| -> Result<Var> {
        let a = g.scale(a, wa)?;
        let b = g.scale(b, wb)?;
        g.add(a, b)
    };
    let loc = weighted(g, bce, cfg.bce_weight, dice, cfg.dice_weight)?;
    let dam = weighted(g, ce, cfg.ce_weight, lovasz, cfg.lovasz_weight)?;
    let total = weighted(g, loc, 1.0, dam, cfg.alpha)?;
    Ok(LossTerms { total, loc, dam, bce, dice, ce, lovasz })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn leaf(g: &mut Graph<f64>, shape: &[usize], v: Vec<f64>) -> Var {
        g.leaf(Tensor::new(shape, v).unwrap(), true)
    }

    #[test]
    fn bce_at_zero_logits_is_ln2() {
        let mut g = Graph::new();
        let z = leaf(&mut g, &[1, 1, 2, 2], vec![0.0; 4]);
        let m = Mask::new(&[1, 2, 2], vec![0, 1, 1, 0]).unwrap();
        let l = bce_loss(&mut g, z, &m).unwrap();
        assert!((g.value(l).item() - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn bce_rejects_non_binary_mask() {
        let mut g = Graph::<f64>::new();
        let z = leaf(&mut g, &[1, 1, 1, 2], vec![0.0; 2]);
        let m = Mask::new(&[1, 1, 2], vec![0, 2]).unwrap();
        assert!(matches!(bce_loss(&mut g, z, &m), Err(Error::Input(_))));
    }

    #[test]
    fn dice_examples() {
        assert_eq!(dice_value(&[1.0; 4], &[1.0; 4], 1.0), 0.0);
        assert!((dice_value(&[0.0f64; 4], &[1.0; 4], 1.0) - 0.8).abs() < 1e-15);
        assert_eq!(dice_value(&[0.0; 4], &[0.0; 4], 1.0), 0.0);
    }

    #[test]
    fn ce_uniform_is_ln5() {
        let mut g = Graph::new();
        let z = leaf(&mut g, &[1, 5, 1, 3], vec![0.25; 15]);
        let m = Mask::new(&[1, 1, 3], vec![0, 3, 4]).unwrap();
        let l = ce_loss(&mut g, z, &m).unwrap();
        assert!((g.value(l).item() - 5f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn ce_rejects_bad_class() {
        let mut g = Graph::<f64>::new();
        let z = leaf(&mut g, &[1, 5, 1, 1], vec![0.0; 5]);
        let m = Mask::new(&[1, 1, 1], vec![5]).unwrap();
        assert!(matches!(ce_loss(&mut g, z, &m), Err(Error::Input(_))));
    }

    #[test]
    fn lovasz_grad_examples() {
        let w: Vec<f64> = lovasz_grad(&[true, true, false, false]);
        assert_eq!(w, vec![0.5, 0.5, 0.0, 0.0]);
        let w: Vec<f64> = lovasz_grad(&[false; 4]);
        assert_eq!(w, vec![1.0, 0.0, 0.0, 0.0]);
        assert!(lovasz_grad::<f64>(&[]).is_empty());
    }

    #[test]
    fn lovasz_single_class_vertex() {
        // class 1 gt on pixels 0,1; hard prediction of class 1 only on pixel 0
        let mask = Mask::new(&[1, 1, 4], vec![1, 1, 0, 0]).unwrap();
        let probs = Tensor::new(&[1, 2, 1, 4], vec![0.0, 1.0, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0]).unwrap();
        let t = lovasz_softmax_probs(&probs, &mask, LovaszClasses::Present).unwrap();
        assert_eq!(t.per_class[1], Some(0.5));
    }

    #[test]
    fn compound_weights() {
        assert!((combine(0.4, 0.3, 2.0) - 1.0).abs() < 1e-15);
        let mut g = Graph::new();
        let zl = leaf(&mut g, &[1, 1, 1, 2], vec![0.3, -1.2]);
        let zd = leaf(&mut g, &[1, 5, 1, 2], (0..10).map(|i| i as f64 * 0.1).collect());
        let ml = Mask::new(&[1, 1, 2], vec![1, 0]).unwrap();
        let md = Mask::new(&[1, 1, 2], vec![2, 0]).unwrap();
        let cfg = LossConfig { alpha: 0.0, ..LossConfig::default() };
        let t = compound_loss(&mut g, zl, zd, &ml, &md, &cfg).unwrap().values(&g);
        assert_eq!(t.total, t.loc);
        assert_eq!(t.loc, t.bce + t.dice);
        assert_eq!(t.dam, t.ce + t.lovasz);
    }
}

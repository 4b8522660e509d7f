//! Loss values against independent formulas and exhaustive oracles.

mod common;

use common::{labels, rand};
use damformer::config::{LossConfig, LovaszClasses};
use damformer::loss::{bce_loss, ce_loss, compound_loss, dice_loss, lovasz_softmax, lovasz_softmax_probs};
use damformer::mask::Mask;
use damformer::rng::SplitMix64;
use damformer::{Graph, Result, Tensor, Var};
use proptest::prelude::*;

fn eval(logits: Tensor<f64>, f: impl FnOnce(&mut Graph<f64>, Var) -> Result<Var>) -> f64 {
    let mut g = Graph::new();
    let z = g.constant(logits);
    let out = f(&mut g, z).unwrap();
    g.value(out).item()
}

fn one_hot(pred: &[u8], classes: usize) -> Tensor<f64> {
    let hw = pred.len();
    let mut data = vec![0.0; classes * hw];
    for (i, &k) in pred.iter().enumerate() {
        data[k as usize * hw + i] = 1.0;
    }
    Tensor::new(&[1, classes, 1, hw], data).unwrap()
}

/// `1 − |P ∩ Y| / |P ∪ Y|`, zero when both sets are empty.
fn jaccard_loss(pred: &[u8], truth: &[u8], class: u8) -> f64 {
    let inter = pred.iter().zip(truth).filter(|&(&p, &t)| p == class && t == class).count();
    let union = pred.iter().zip(truth).filter(|&(&p, &t)| p == class || t == class).count();
    if union == 0 {
        0.0
    } else {
        1.0 - inter as f64 / union as f64
    }
}

fn all_masks(pixels: usize, classes: u8) -> Vec<Vec<u8>> {
    let total = (classes as usize).pow(pixels as u32);
    (0..total)
        .map(|mut code| {
            (0..pixels)
                .map(|_| {
                    let v = (code % classes as usize) as u8;
                    code /= classes as usize;
                    v
                })
                .collect()
        })
        .collect()
}

#[test]
fn lovasz_equals_jaccard_at_every_vertex() {
    let masks = all_masks(4, 3);
    assert_eq!(masks.len(), 81);
    let mut pairs = 0;
    for truth in &masks {
        let mask = Mask::new(&[1, 2, 2], truth.clone()).unwrap();
        for pred in &masks {
            let probs = one_hot(pred, 3).reshape(&[1, 3, 2, 2]).unwrap();
            let all = lovasz_softmax_probs(&probs, &mask, LovaszClasses::All).unwrap();
            let present = lovasz_softmax_probs(&probs, &mask, LovaszClasses::Present).unwrap();
            for c in 0..3u8 {
                let expected = jaccard_loss(pred, truth, c);
                let got = all.per_class[c as usize].unwrap();
                assert!((got - expected).abs() < 1e-9, "class {c}: pred {pred:?} truth {truth:?}: {got} vs {expected}");
                assert_eq!(present.per_class[c as usize].is_some(), truth.contains(&c));
            }
            pairs += 1;
        }
    }
    assert_eq!(pairs, 6561);
}

#[test]
fn bce_matches_direct_formula() {
    let z = rand(&[2, 1, 3, 5], 6.0, 1);
    let y = labels(&[2, 3, 5], 2, 2);
    let expected: f64 = z
        .data()
        .iter()
        .zip(y.data())
        .map(|(&z, &y)| {
            let p = 1.0 / (1.0 + (-z).exp());
            if y == 1 {
                -p.ln()
            } else {
                -(1.0 - p).ln()
            }
        })
        .sum::<f64>()
        / 30.0;
    let got = eval(z, |g, v| bce_loss(g, v, &y));
    assert!((got - expected).abs() < 1e-12, "{got} vs {expected}");
}

#[test]
fn bce_is_stable_for_extreme_logits() {
    let z = Tensor::new(&[1, 1, 1, 2], vec![800.0, -800.0]).unwrap();
    let y = Mask::new(&[1, 1, 2], vec![0, 1]).unwrap();
    let got = eval(z, |g, v| bce_loss(g, v, &y));
    assert!((got - 800.0).abs() < 1e-9);
}

#[test]
fn dice_matches_direct_formula() {
    let z = rand(&[2, 1, 4, 4], 3.0, 3);
    let y = labels(&[2, 4, 4], 2, 4);
    let p: Vec<f64> = z.data().iter().map(|&v| 1.0 / (1.0 + (-v).exp())).collect();
    let yf: Vec<f64> = y.data().iter().map(|&v| v as f64).collect();
    let inter: f64 = p.iter().zip(&yf).map(|(a, b)| a * b).sum();
    let expected = 1.0 - (2.0 * inter + 1.0) / (p.iter().sum::<f64>() + yf.iter().sum::<f64>() + 1.0);
    let got = eval(z, |g, v| dice_loss(g, v, &y, 1.0));
    assert!((got - expected).abs() < 1e-12);
}

#[test]
fn dice_is_zero_for_perfect_prediction() {
    let y = labels(&[1, 4, 4], 2, 5);
    let z = Tensor::new(&[1, 1, 4, 4], y.data().iter().map(|&v| if v == 1 { 40.0 } else { -40.0 }).collect()).unwrap();
    assert!(eval(z, |g, v| dice_loss(g, v, &y, 1.0)).abs() < 1e-6);
}

#[test]
fn ce_matches_direct_formula() {
    let z = rand(&[2, 5, 2, 3], 4.0, 6);
    let y = labels(&[2, 2, 3], 5, 7);
    let mut expected = 0.0;
    for b in 0..2 {
        for i in 0..6 {
            let at = |k: usize| z.data()[(b * 5 + k) * 6 + i];
            let denom: f64 = (0..5).map(|k| at(k).exp()).sum();
            let k = y.data()[b * 6 + i] as usize;
            expected -= (at(k).exp() / denom).ln();
        }
    }
    expected /= 12.0;
    let got = eval(z, |g, v| ce_loss(g, v, &y));
    assert!((got - expected).abs() < 1e-12);
}

#[test]
fn ce_uniform_logits_give_ln5() {
    let z = Tensor::full(&[1, 5, 3, 3], 0.7);
    let y = labels(&[1, 3, 3], 5, 8);
    assert!((eval(z, |g, v| ce_loss(g, v, &y)) - 5f64.ln()).abs() < 1e-6);
}

#[test]
fn lovasz_softmax_on_logits_matches_probability_form() {
    let z = rand(&[1, 5, 3, 3], 3.0, 9);
    let y = labels(&[1, 3, 3], 5, 10);
    let mut probs = vec![0.0; 45];
    for i in 0..9 {
        let denom: f64 = (0..5).map(|k| z.data()[k * 9 + i].exp()).sum();
        for k in 0..5 {
            probs[k * 9 + i] = z.data()[k * 9 + i].exp() / denom;
        }
    }
    let probs = Tensor::new(&[1, 5, 3, 3], probs).unwrap();
    for policy in [LovaszClasses::Present, LovaszClasses::All] {
        let expected = lovasz_softmax_probs(&probs, &y, policy).unwrap().mean;
        let got = eval(z.clone(), |g, v| lovasz_softmax(g, v, &y, policy));
        assert!((got - expected).abs() < 1e-12);
    }
}

#[test]
fn alpha_zero_gives_localization_loss_exactly() {
    let zl = rand(&[2, 1, 4, 4], 2.0, 11);
    let zd = rand(&[2, 5, 4, 4], 2.0, 12);
    let ml = labels(&[2, 4, 4], 2, 13);
    let md = labels(&[2, 4, 4], 5, 14);
    let cfg = LossConfig { alpha: 0.0, ..LossConfig::default() };
    let mut g = Graph::new();
    let (a, b) = (g.constant(zl), g.constant(zd));
    let t = compound_loss(&mut g, a, b, &ml, &md, &cfg).unwrap().values(&g);
    assert_eq!(t.total, t.loc);
}

#[test]
fn total_grows_with_alpha() {
    let zl = rand(&[1, 1, 4, 4], 2.0, 15);
    let zd = rand(&[1, 5, 4, 4], 2.0, 16);
    let ml = labels(&[1, 4, 4], 2, 17);
    let md = labels(&[1, 4, 4], 5, 18);
    let totals: Vec<f64> = [0.0, 0.5, 1.0, 2.0, 4.0]
        .iter()
        .map(|&alpha| {
            let cfg = LossConfig { alpha, ..LossConfig::default() };
            let mut g = Graph::new();
            let (a, b) = (g.constant(zl.clone()), g.constant(zd.clone()));
            let t = compound_loss(&mut g, a, b, &ml, &md, &cfg).unwrap().values(&g);
            assert!((t.total - (t.loc + alpha * t.dam)).abs() < 1e-12);
            t.total
        })
        .collect();
    assert!(totals.windows(2).all(|w| w[1] > w[0]), "{totals:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn lovasz_is_pixel_permutation_invariant(seed in any::<u64>(), rot in 1usize..12) {
        let z = rand(&[1, 5, 3, 4], 3.0, seed);
        let y = labels(&[1, 3, 4], 5, seed ^ 0xabc);
        let hw = 12;
        let mut perm: Vec<usize> = (0..hw).collect();
        SplitMix64::new(seed).shuffle(&mut perm);
        perm.rotate_left(rot % hw);
        let zp: Vec<f64> = (0..5 * hw).map(|j| z.data()[(j / hw) * hw + perm[j % hw]]).collect();
        let yp: Vec<u8> = (0..hw).map(|i| y.data()[perm[i]]).collect();
        let a = eval(z, |g, v| lovasz_softmax(g, v, &y, LovaszClasses::Present));
        let b = eval(Tensor::new(&[1, 5, 3, 4], zp).unwrap(), |g, v| {
            lovasz_softmax(g, v, &Mask::new(&[1, 3, 4], yp.clone()).unwrap(), LovaszClasses::Present)
        });
        prop_assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn losses_are_bounded_and_finite(seed in any::<u64>(), scale in 0.1f64..50.0) {
        let zl = rand(&[1, 1, 4, 4], scale, seed);
        let zd = rand(&[1, 5, 4, 4], scale, seed.wrapping_add(1));
        let ml = labels(&[1, 4, 4], 2, seed.wrapping_add(2));
        let md = labels(&[1, 4, 4], 5, seed.wrapping_add(3));
        let mut g = Graph::new();
        let (a, b) = (g.constant(zl), g.constant(zd));
        let t = compound_loss(&mut g, a, b, &ml, &md, &LossConfig::default()).unwrap().values(&g);
        prop_assert!(t.total.is_finite() && t.bce >= 0.0 && t.ce >= 0.0);
        prop_assert!((0.0..=1.0).contains(&t.dice));
        prop_assert!((0.0..=1.0).contains(&t.lovasz));
    }
}

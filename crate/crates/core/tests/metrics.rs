//! Scoring arithmetic against the published benchmark table and counting oracles.

use damformer::mask::Mask;
use damformer::metrics::{damage_f1, f1, overall_f1, render, Confusion};
use proptest::prelude::*;

/// `(F1_oa, F1_loc, F1_dam, [no, minor, major, destroyed])`, percentages.
const TABLE: [(&str, f64, f64, f64, [f64; 4]); 5] = [
    ("xView2 Baseline", 26.54, 80.47, 3.42, [66.31, 14.35, 0.94, 46.57]),
    ("Siamese-UNet", 71.68, 85.92, 65.58, [86.74, 50.02, 64.43, 71.68]),
    ("MaskRCNN", 74.10, 83.60, 70.02, [90.60, 49.30, 72.20, 83.70]),
    ("ChangeOS", 75.50, 85.69, 71.14, [89.11, 53.11, 72.44, 80.79]),
    ("DamFormer", 77.02, 86.86, 72.81, [89.86, 56.78, 72.56, 80.51]),
];

fn rendered(score: f64) -> f64 {
    render(score).parse().unwrap()
}

#[test]
fn overall_score_reproduces_every_table_row() {
    for (name, oa, loc, dam, _) in TABLE {
        let got = rendered(overall_f1(loc / 100.0, dam / 100.0));
        assert!((got - oa).abs() <= 0.01 + 1e-9, "{name}: {got} vs {oa}");
    }
}

#[test]
fn damage_score_reproduces_every_table_row() {
    // per-class inputs are themselves rounded to two decimals
    for (name, _, _, dam, per_class) in TABLE {
        let got = rendered(damage_f1(&per_class.map(|v| v / 100.0)));
        assert!((got - dam).abs() <= 0.05 + 1e-9, "{name}: {got} vs {dam}");
    }
}

#[test]
fn damformer_row_renders() {
    assert_eq!(render(overall_f1(0.8686, 0.7281)), "77.02");
    assert!((overall_f1(0.8686, 0.7281) - 0.77025).abs() < 1e-12);
    assert!((rendered(overall_f1(0.8047, 0.0342)) - 26.54).abs() <= 0.01 + 1e-9);
    assert_eq!(render(damage_f1(&[0.8986, 0.5678, 0.7256, 0.8051])), "72.80");
}

#[test]
fn one_missing_class_zeroes_the_damage_score() {
    assert_eq!(damage_f1(&[0.9, 0.9, 0.0, 0.9]), 0.0);
    assert_eq!(overall_f1(0.8, 0.0), 0.3 * 0.8);
}

fn masks(loc: Vec<u8>, dam: Vec<u8>, h: usize, w: usize) -> (Mask, Mask) {
    (Mask::new(&[h, w], loc).unwrap(), Mask::new(&[h, w], dam).unwrap())
}

#[test]
fn reference_as_prediction_scores_one() {
    let (l, d) = masks(vec![1, 1, 1, 1, 0, 0], vec![1, 2, 3, 4, 0, 0], 2, 3);
    let mut c = Confusion::default();
    c.accumulate(&l, &d, &l, &d).unwrap();
    let r = c.report();
    assert_eq!((r.f1_loc, r.f1_dam, r.f1_oa), (1.0, 1.0, 1.0));
    assert_eq!(r.f1_damage, [1.0; 4]);
}

#[test]
fn all_background_prediction_scores_zero() {
    let (l, d) = masks(vec![1, 1, 1, 1, 0, 0], vec![1, 2, 3, 4, 0, 0], 2, 3);
    let z = Mask::zeros(&[2, 3]);
    let mut c = Confusion::default();
    c.accumulate(&z, &z, &l, &d).unwrap();
    let r = c.report();
    assert_eq!((r.f1_loc, r.f1_dam, r.f1_oa), (0.0, 0.0, 0.0));
}

/// Per-class F1 counted pixel by pixel, independent of `Confusion`.
fn direct_f1(pred: &[u8], truth: &[u8], class: u8) -> f64 {
    let tp = pred.iter().zip(truth).filter(|&(&p, &t)| p == class && t == class).count() as u64;
    let fp = pred.iter().zip(truth).filter(|&(&p, &t)| p == class && t != class).count() as u64;
    let fn_ = pred.iter().zip(truth).filter(|&(&p, &t)| p != class && t == class).count() as u64;
    f1(tp, fp, fn_)
}

fn consistent_pair() -> impl Strategy<Value = (Vec<u8>, Vec<u8>)> {
    prop::collection::vec(0u8..5, 24).prop_map(|dam| (dam.iter().map(|&v| (v > 0) as u8).collect(), dam))
}

proptest! {
    #[test]
    fn confusion_matches_direct_counts((pl, pd) in consistent_pair(), (rl, rd) in consistent_pair()) {
        let (a, b) = masks(pl.clone(), pd.clone(), 4, 6);
        let (c, d) = masks(rl.clone(), rd.clone(), 4, 6);
        let mut conf = Confusion::default();
        conf.accumulate(&a, &b, &c, &d).unwrap();
        let r = conf.report();
        prop_assert_eq!(r.f1_loc, direct_f1(&pl, &rl, 1));
        for k in 1..=4u8 {
            prop_assert_eq!(r.f1_damage[k as usize - 1], direct_f1(&pd, &rd, k));
        }
        prop_assert!((r.f1_oa - overall_f1(r.f1_loc, damage_f1(&r.f1_damage))).abs() < 1e-15);
    }

    #[test]
    fn merged_partial_counts_equal_whole((pl, pd) in consistent_pair(), (rl, rd) in consistent_pair()) {
        let (a, b) = masks(pl.clone(), pd.clone(), 4, 6);
        let (c, d) = masks(rl.clone(), rd.clone(), 4, 6);
        let mut whole = Confusion::default();
        whole.accumulate(&a, &b, &c, &d).unwrap();
        let mut merged = Confusion::default();
        for half in [0..12, 12..24] {
            let (a, b) = masks(pl[half.clone()].to_vec(), pd[half.clone()].to_vec(), 2, 6);
            let (c, d) = masks(rl[half.clone()].to_vec(), rd[half].to_vec(), 2, 6);
            let mut part = Confusion::default();
            part.accumulate(&a, &b, &c, &d).unwrap();
            merged.merge(&part);
        }
        prop_assert_eq!(merged, whole);
    }
}

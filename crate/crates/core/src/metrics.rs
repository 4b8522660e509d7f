//! Pixel-level F1 scoring in the xView2 style.

use std::fmt::Write as _;

use crate::config::DAMAGE_CLASSES;
use crate::error::{Error, Result};
use crate::mask::Mask;
use crate::ops::basic::sigmoid;
use crate::tensor::{Element, Tensor};

/// Weight of localization in the overall score; damage gets the rest.
pub const LOC_WEIGHT: f64 = 0.3;

pub const DAMAGE_NAMES: [&str; 4] = ["no_damage", "minor", "major", "destroyed"];

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Counts {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

impl Counts {
    pub fn merge(&mut self, other: &Counts) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.fn_ += other.fn_;
        self.tn += other.tn;
    }

    fn record(&mut self, pred: bool, truth: bool) {
        match (pred, truth) {
            (true, true) => self.tp += 1,
            (true, false) => self.fp += 1,
            (false, true) => self.fn_ += 1,
            (false, false) => self.tn += 1,
        }
    }

    pub fn f1(&self) -> f64 {
        f1(self.tp, self.fp, self.fn_)
    }
}

/// `2tp / (2tp + fp + fn)`, or 0 when nothing was predicted or present.
pub fn f1(tp: u64, fp: u64, fn_: u64) -> f64 {
    let den = 2 * tp + fp + fn_;
    if den == 0 {
        0.0
    } else {
        (2 * tp) as f64 / den as f64
    }
}

/// Harmonic mean of the four per-class damage scores; 0 if any is 0.
pub fn damage_f1(per_class: &[f64; 4]) -> f64 {
    if per_class.iter().any(|&s| s <= 0.0) {
        return 0.0;
    }
    4.0 / per_class.iter().map(|s| 1.0 / s).sum::<f64>()
}

pub fn overall_f1(f1_loc: f64, f1_dam: f64) -> f64 {
    LOC_WEIGHT * f1_loc + (1.0 - LOC_WEIGHT) * f1_dam
}

/// Score in `[0, 1]` as a two-decimal percentage.
pub fn render(score: f64) -> String {
    format!("{:.2}", score * 100.0)
}

/// Pixel confusion counts for localization and damage classes 1..=4.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Confusion {
    pub loc: Counts,
    pub damage: [Counts; 4],
}

impl Confusion {
    pub fn accumulate(&mut self, pred_loc: &Mask, pred_dam: &Mask, ref_loc: &Mask, ref_dam: &Mask) -> Result<()> {
        let shape = ref_loc.shape();
        for (what, m) in
            [("predicted localization", pred_loc), ("predicted damage", pred_dam), ("reference damage", ref_dam)]
        {
            if m.shape() != shape {
                return Err(Error::Input(format!(
                    "{what} mask {:?} does not match reference localization {shape:?}",
                    m.shape()
                )));
            }
        }
        let top = DAMAGE_CLASSES as u8 - 1;
        pred_dam.check_max(top, "predicted damage")?;
        ref_dam.check_max(top, "reference damage")?;
        let pixels = pred_loc.data().iter().zip(ref_loc.data()).zip(pred_dam.data().iter().zip(ref_dam.data()));
        for ((&pl, &rl), (&pd, &rd)) in pixels {
            self.loc.record(pl != 0, rl != 0);
            for (k, counts) in self.damage.iter_mut().enumerate() {
                let c = k as u8 + 1;
                if pd == c || rd == c {
                    counts.record(pd == c, rd == c);
                }
            }
        }
        Ok(())
    }

    pub fn merge(&mut self, other: &Confusion) {
        self.loc.merge(&other.loc);
        for (a, b) in self.damage.iter_mut().zip(&other.damage) {
            a.merge(b);
        }
    }

    pub fn report(&self) -> MetricsReport {
        let f1_loc = self.loc.f1();
        let f1_damage = self.damage.map(|c| c.f1());
        let f1_dam = damage_f1(&f1_damage);
        MetricsReport { confusion: *self, f1_loc, f1_damage, f1_dam, f1_oa: overall_f1(f1_loc, f1_dam) }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub confusion: Confusion,
    pub f1_loc: f64,
    pub f1_damage: [f64; 4],
    pub f1_dam: f64,
    pub f1_oa: f64,
}

impl MetricsReport {
    /// Aligned table with the columns of the usual benchmark layout.
    pub fn table(&self) -> String {
        let mut heads = vec!["F1_oa", "F1_loc", "F1_dam"];
        heads.extend(DAMAGE_NAMES);
        let mut vals = vec![self.f1_oa, self.f1_loc, self.f1_dam];
        vals.extend(self.f1_damage);
        let widths: Vec<usize> = heads.iter().map(|h| h.len().max(6)).collect();
        let mut s = String::new();
        for (h, w) in heads.iter().zip(&widths) {
            let _ = write!(s, "{h:>w$}  ");
        }
        s = s.trim_end().to_string();
        s.push('\n');
        let mut row = String::new();
        for (v, w) in vals.iter().zip(&widths) {
            let _ = write!(row, "{:>w$}  ", render(*v));
        }
        s.push_str(row.trim_end());
        s.push('\n');
        s
    }

    /// Flat `key = value` lines, scores as percentages, then raw counts.
    pub fn key_values(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("f1_oa", render(self.f1_oa));
        kv("f1_loc", render(self.f1_loc));
        kv("f1_dam", render(self.f1_dam));
        for (name, v) in DAMAGE_NAMES.iter().zip(self.f1_damage) {
            kv(&format!("f1_{name}"), render(v));
        }
        let c = &self.confusion.loc;
        kv("loc_tp", c.tp.to_string());
        kv("loc_fp", c.fp.to_string());
        kv("loc_fn", c.fn_.to_string());
        kv("loc_tn", c.tn.to_string());
        for (name, c) in DAMAGE_NAMES.iter().zip(&self.confusion.damage) {
            kv(&format!("{name}_tp"), c.tp.to_string());
            kv(&format!("{name}_fp"), c.fp.to_string());
            kv(&format!("{name}_fn"), c.fn_.to_string());
        }
        s
    }
}

/// Hard masks from logits `loc[N, 1, H, W]`, `dam[N, 5, H, W]`: a pixel is a
/// building when `σ(z) > 0.5`; buildings take the most likely of the damage
/// levels 1..=4 and everything else is background.
pub fn masks_from_logits<T: Element>(loc: &Tensor<T>, dam: &Tensor<T>) -> Result<(Mask, Mask)> {
    let (ls, ds) = (loc.shape(), dam.shape());
    if ls.len() != 4 || ds.len() != 4 || ls[1] != 1 || ds[1] != DAMAGE_CLASSES || ls[0] != ds[0] || ls[2..] != ds[2..] {
        return Err(Error::shape("masks_from_logits", ls, ds));
    }
    let (n, hw) = (ls[0], ls[2] * ls[3]);
    let half = T::of(0.5);
    let loc_mask: Vec<u8> = loc.data().iter().map(|&z| u8::from(sigmoid(z) > half)).collect();
    let mut dam_mask = vec![0u8; n * hw];
    let z = dam.data();
    for b in 0..n {
        for i in 0..hw {
            if loc_mask[b * hw + i] == 0 {
                continue;
            }
            let at = |k: usize| z[(b * DAMAGE_CLASSES + k) * hw + i];
            let mut best = 1;
            for k in 2..DAMAGE_CLASSES {
                if at(k) > at(best) {
                    best = k;
                }
            }
            dam_mask[b * hw + i] = best as u8;
        }
    }
    let shape = [n, ls[2], ls[3]];
    Ok((Mask::new(&shape, loc_mask)?, Mask::new(&shape, dam_mask)?))
}

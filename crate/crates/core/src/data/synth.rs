//! Synthetic pre/post scene pairs.
//!
//! A scene is a textured background with non-overlapping rectangular
//! buildings. The post image starts as a copy of the pre image and each
//! building is altered by its damage level:
//!
//! | level | post-event change                              |
//! |-------|------------------------------------------------|
//! | 1     | none                                           |
//! | 2     | brightness shift                               |
//! | 3     | brightness shift and speckle                   |
//! | 4     | roof replaced by the background texture        |

use super::SamplePair;
use crate::config::SynthConfig;
use crate::error::{Error, Result};
use crate::mask::Mask;
use crate::rng::SplitMix64;
use crate::tensor::Tensor;

pub const BRIGHTNESS_SHIFT: f64 = -0.2;
pub const SPECKLE: f64 = 0.15;
/// Placement attempts per building before giving up.
pub const MAX_ATTEMPTS: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Building {
    pub y: usize,
    pub x: usize,
    pub h: usize,
    pub w: usize,
    /// Damage level 1..=4.
    pub level: u8,
}

impl Building {
    pub fn area(&self) -> usize {
        self.h * self.w
    }

    fn clear_of(&self, o: &Building, gap: usize) -> bool {
        self.x + self.w + gap <= o.x
            || o.x + o.w + gap <= self.x
            || self.y + self.h + gap <= o.y
            || o.y + o.h + gap <= self.y
    }

    fn contains(&self, y: usize, x: usize) -> bool {
        (self.y..self.y + self.h).contains(&y) && (self.x..self.x + self.w).contains(&x)
    }
}

struct Grating {
    fy: f64,
    fx: f64,
    phase: f64,
    amp: f64,
}

struct Layout {
    base: [f64; 3],
    gratings: [Grating; 2],
    buildings: Vec<Building>,
    roofs: Vec<[f64; 3]>,
}

fn draw_level(rng: &mut SplitMix64, probs: &[f64; 4]) -> u8 {
    let u = rng.next_f64();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i as u8 + 1;
        }
    }
    // rounding left u above the cumulative total; take the last level with mass
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(0) as u8 + 1
}

fn draw_layout(cfg: &SynthConfig, rng: &mut SplitMix64) -> Result<Layout> {
    let mut base = [0.0; 3];
    for b in &mut base {
        *b = 0.2 + 0.25 * rng.next_f64();
    }
    let mut grating = || Grating {
        fy: rng.next_f64() * 0.5,
        fx: rng.next_f64() * 0.5,
        phase: rng.next_f64() * std::f64::consts::TAU,
        amp: 0.03 + 0.04 * rng.next_f64(),
    };
    let gratings = [grating(), grating()];

    let (smin, smax) = (cfg.building_size.0 as u32, cfg.building_size.1 as u32);
    let count = rng.range_inclusive(cfg.buildings.0 as u32, cfg.buildings.1 as u32) as usize;
    let mut buildings: Vec<Building> = Vec::with_capacity(count);
    let mut roofs = Vec::with_capacity(count);
    for k in 0..count {
        let mut placed = None;
        for _ in 0..MAX_ATTEMPTS {
            let h = rng.range_inclusive(smin, smax) as usize;
            let w = rng.range_inclusive(smin, smax) as usize;
            let y = rng.range_inclusive(0, (cfg.size - h) as u32) as usize;
            let x = rng.range_inclusive(0, (cfg.size - w) as u32) as usize;
            let cand = Building { y, x, h, w, level: 0 };
            if buildings.iter().all(|b| cand.clear_of(b, cfg.gap)) {
                placed = Some(cand);
                break;
            }
        }
        let mut b = placed.ok_or_else(|| {
            Error::Generation(format!("could not place building {} of {count} in {MAX_ATTEMPTS} attempts", k + 1))
        })?;
        b.level = draw_level(rng, &cfg.damage_probs);
        buildings.push(b);
        let mut roof = [0.0; 3];
        for c in &mut roof {
            *c = 0.6 + 0.3 * rng.next_f64();
        }
        roofs.push(roof);
    }
    Ok(Layout { base, gratings, buildings, roofs })
}

/// Buildings of scene `index`, as drawn by [`synth_scene`].
pub fn synth_buildings(cfg: &SynthConfig, index: u64) -> Result<Vec<Building>> {
    cfg.validate()?;
    let mut rng = SplitMix64::for_stream(cfg.seed, index);
    Ok(draw_layout(cfg, &mut rng)?.buildings)
}

/// Scene `index` of the dataset defined by `cfg`; a pure function of both.
pub fn synth_scene(cfg: &SynthConfig, index: u64) -> Result<SamplePair> {
    cfg.validate()?;
    let mut rng = SplitMix64::for_stream(cfg.seed, index);
    let layout = draw_layout(cfg, &mut rng)?;
    let n = cfg.size;
    let plane = n * n;

    let mut background = vec![0.0f64; 3 * plane];
    let mut pre = vec![0.0f64; 3 * plane];
    let mut loc = vec![0u8; plane];
    let mut dam = vec![0u8; plane];
    for y in 0..n {
        for x in 0..n {
            let tex: f64 =
                layout.gratings.iter().map(|g| g.amp * (g.fy * y as f64 + g.fx * x as f64 + g.phase).sin()).sum();
            let owner = layout.buildings.iter().position(|b| b.contains(y, x));
            for c in 0..3 {
                let noise = cfg.noise * (2.0 * rng.next_f64() - 1.0);
                let bg = layout.base[c] + tex + noise;
                let i = c * plane + y * n + x;
                background[i] = bg;
                pre[i] = match owner {
                    Some(k) => layout.roofs[k][c] + noise,
                    None => bg,
                };
            }
            if let Some(k) = owner {
                loc[y * n + x] = 1;
                dam[y * n + x] = layout.buildings[k].level;
            }
        }
    }

    let mut post = pre.clone();
    for b in &layout.buildings {
        for y in b.y..b.y + b.h {
            for x in b.x..b.x + b.w {
                let speckle = if b.level == 3 { SPECKLE * (2.0 * rng.next_f64() - 1.0) } else { 0.0 };
                for c in 0..3 {
                    let i = c * plane + y * n + x;
                    match b.level {
                        2 => post[i] += BRIGHTNESS_SHIFT,
                        3 => post[i] += BRIGHTNESS_SHIFT + speckle,
                        4 => post[i] = background[i],
                        _ => {}
                    }
                }
            }
        }
    }

    let image = |v: Vec<f64>| {
        let data = v.into_iter().map(|x| x.clamp(0.0, 1.0) as f32).collect();
        Tensor::new(&[3, n, n], data).expect("image shape")
    };
    Ok(SamplePair { pre: image(pre), post: image(post), loc: Mask::new(&[n, n], loc)?, dam: Mask::new(&[n, n], dam)? })
}

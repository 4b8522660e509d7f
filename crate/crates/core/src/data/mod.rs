//! Samples, batching, dataset directories and file formats.

pub mod image;
pub mod raster;
pub mod synth;

use std::path::{Path, PathBuf};

use crate::config::{SynthConfig, DAMAGE_CLASSES};
use crate::error::{Error, Result};
use crate::mask::Mask;
use crate::rng::{derive_seed, SplitMix64};
use crate::tensor::{Element, Tensor};

pub use image::{
    decode_pgm, decode_ppm, encode_pgm, encode_ppm, palette_to_mask, render_damage_palette, RgbImage, PALETTE,
};
pub use raster::{decode_raster, encode_raster, read_raster, write_raster, Raster};
pub use synth::{synth_buildings, synth_scene, Building};

/// One co-registered pre/post image pair with its reference masks.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplePair {
    /// `[3, H, W]`, values in `[0, 1]`.
    pub pre: Tensor<f32>,
    pub post: Tensor<f32>,
    /// `[H, W]`, 1 on building pixels.
    pub loc: Mask,
    /// `[H, W]`, damage level 1..=4 on buildings and 0 elsewhere.
    pub dam: Mask,
}

impl SamplePair {
    pub fn size(&self) -> (usize, usize) {
        (self.loc.shape()[0], self.loc.shape()[1])
    }

    /// Checks shapes, label ranges and that damage labels sit exactly on buildings.
    pub fn validate(&self) -> Result<()> {
        let mask_shape = self.loc.shape();
        if mask_shape.len() != 2 || self.dam.shape() != mask_shape {
            return Err(Error::Input(format!(
                "masks must share an [H, W] shape, got {:?} and {:?}",
                mask_shape,
                self.dam.shape()
            )));
        }
        let (h, w) = (mask_shape[0], mask_shape[1]);
        for (what, img) in [("pre", &self.pre), ("post", &self.post)] {
            if img.shape() != [3, h, w] {
                return Err(Error::Input(format!("{what} image {:?} does not match masks [3, {h}, {w}]", img.shape())));
            }
        }
        if h % 32 != 0 || w % 32 != 0 {
            return Err(Error::Input(format!("sample size {h}x{w} is not divisible by 32")));
        }
        self.loc.check_max(1, "localization mask")?;
        self.dam.check_max(DAMAGE_CLASSES as u8 - 1, "damage mask")?;
        if let Some(i) = self.loc.data().iter().zip(self.dam.data()).position(|(&l, &d)| (l == 1) != (d > 0)) {
            return Err(Error::Input(format!("localization and damage masks disagree at pixel {i}")));
        }
        Ok(())
    }

    pub fn bit_eq(&self, other: &SamplePair) -> bool {
        self.pre.bit_eq(&other.pre) && self.post.bit_eq(&other.post) && self.loc == other.loc && self.dam == other.dam
    }
}

/// Stacked samples ready for the model.
#[derive(Debug, Clone)]
pub struct Batch<T> {
    pub pre: Tensor<T>,
    pub post: Tensor<T>,
    pub loc: Mask,
    pub dam: Mask,
}

impl<T: Element> Batch<T> {
    pub fn from_samples(samples: &[&SamplePair]) -> Result<Self> {
        let stack = |f: fn(&SamplePair) -> &Tensor<f32>| -> Result<Tensor<T>> {
            let items: Vec<Tensor<f32>> = samples.iter().map(|s| f(s).clone()).collect();
            Ok(Tensor::stack(&items)?.cast())
        };
        let masks =
            |f: fn(&SamplePair) -> &Mask| Mask::stack(&samples.iter().map(|s| f(s).clone()).collect::<Vec<_>>());
        Ok(Self {
            pre: stack(|s| &s.pre)?,
            post: stack(|s| &s.post)?,
            loc: masks(|s| &s.loc)?,
            dam: masks(|s| &s.dam)?,
        })
    }

    pub fn len(&self) -> usize {
        self.loc.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Stream offset that keeps evaluation scenes disjoint from training scenes.
pub const EVAL_STREAM: u64 = 1 << 40;
const SHUFFLE_STREAM: u64 = 1 << 41;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Eval,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Eval => "eval",
        }
    }

    fn stream(self, index: usize) -> u64 {
        match self {
            Split::Train => index as u64,
            Split::Eval => EVAL_STREAM + index as u64,
        }
    }
}

/// `count` synthetic samples of `split`, generated in parallel.
pub fn synth_split(cfg: &SynthConfig, split: Split, count: usize) -> Result<Vec<SamplePair>> {
    use rayon::prelude::*;
    (0..count).into_par_iter().map(|i| synth_scene(cfg, split.stream(i))).collect()
}

/// Sample visiting order for `epoch`: a Fisher-Yates shuffle seeded by `(seed, epoch)`.
pub fn epoch_order(len: usize, seed: u64, epoch: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..len).collect();
    SplitMix64::new(derive_seed(seed, SHUFFLE_STREAM + epoch)).shuffle(&mut order);
    order
}

const PARTS: [&str; 4] = ["pre", "post", "loc", "dam"];

fn part_path(dir: &Path, id: &str, part: &str) -> PathBuf {
    dir.join(format!("{id}.{part}.dfr"))
}

/// Writes samples as `<dir>/<id>.{pre,post,loc,dam}.dfr` with ids `00000`, `00001`, ...
pub fn write_dir(dir: &Path, samples: &[SamplePair]) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    for (i, s) in samples.iter().enumerate() {
        let id = format!("{i:05}");
        write_raster(&part_path(dir, &id, "pre"), &Raster::F32(s.pre.clone()))?;
        write_raster(&part_path(dir, &id, "post"), &Raster::F32(s.post.clone()))?;
        write_raster(&part_path(dir, &id, "loc"), &Raster::U8(s.loc.clone()))?;
        write_raster(&part_path(dir, &id, "dam"), &Raster::U8(s.dam.clone()))?;
    }
    Ok(())
}

fn read_part(dir: &Path, id: &str, part: &str) -> Result<Raster> {
    let path = part_path(dir, id, part);
    read_raster(&path).map_err(|e| match e {
        Error::Format { offset, msg } => Error::Format { offset, msg: format!("{}: {msg}", path.display()) },
        Error::Io(io) => Error::Input(format!("{}: {io}", path.display())),
        other => other,
    })
}

/// Loads every quadruplet in `dir`, sorted by id.
pub fn load_dir(dir: &Path) -> Result<Vec<SamplePair>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::Input(format!("{}: {e}", dir.display())))?;
    let mut ids = Vec::new();
    for entry in entries {
        let name = entry?.file_name();
        if let Some(id) = name.to_str().and_then(|n| n.strip_suffix(".pre.dfr")) {
            ids.push(id.to_string());
        }
    }
    ids.sort();
    if ids.is_empty() {
        return Err(Error::Input(format!("no *.pre.dfr samples in {}", dir.display())));
    }
    ids.iter()
        .map(|id| {
            let [pre, post, loc, dam] = PARTS.map(|p| read_part(dir, id, p));
            let sample = match (pre?, post?, loc?, dam?) {
                (Raster::F32(pre), Raster::F32(post), Raster::U8(loc), Raster::U8(dam)) => {
                    SamplePair { pre, post, loc, dam }
                }
                _ => return Err(Error::Input(format!("sample {id}: images must be f32 and masks u8"))),
            };
            sample.validate().map_err(|e| Error::Input(format!("sample {id} in {}: {e}", dir.display())))?;
            Ok(sample)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn epoch_order_is_a_seeded_permutation() {
        let a = epoch_order(10, 3, 0);
        assert_eq!(a, epoch_order(10, 3, 0));
        assert_ne!(a, epoch_order(10, 3, 1));
        let mut s = a.clone();
        s.sort();
        assert_eq!(s, (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn splits_are_disjoint() {
        let cfg = SynthConfig::default();
        let t = synth_split(&cfg, Split::Train, 2).unwrap();
        let e = synth_split(&cfg, Split::Eval, 2).unwrap();
        assert!(!t[0].bit_eq(&e[0]));
        assert!(t[1].bit_eq(&synth_scene(&cfg, 1).unwrap()));
    }

    #[test]
    fn directory_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = SynthConfig::default();
        let samples = synth_split(&cfg, Split::Train, 3).unwrap();
        write_dir(dir.path(), &samples).unwrap();
        let back = load_dir(dir.path()).unwrap();
        assert!(samples.iter().zip(&back).all(|(a, b)| a.bit_eq(b)));
    }

    #[test]
    fn batch_shapes() {
        let cfg = SynthConfig::default();
        let s = synth_split(&cfg, Split::Train, 2).unwrap();
        let b: Batch<f64> = Batch::from_samples(&[&s[0], &s[1]]).unwrap();
        assert_eq!(b.pre.shape(), &[2, 3, 64, 64]);
        assert_eq!(b.dam.shape(), &[2, 64, 64]);
    }

    #[test]
    fn inconsistent_masks_rejected() {
        let mut s = synth_scene(&SynthConfig::default(), 0).unwrap();
        let i = s.loc.data().iter().position(|&v| v == 1).unwrap();
        s.dam.data_mut()[i] = 0;
        assert!(s.validate().is_err());
    }
}

//! Lightweight dual-task decoder.

use super::encoder::FeaturePyramid;
use super::layers::Conv;
use crate::autograd::{Graph, Var};
use crate::config::{AddBack, DecoderConfig, DAMAGE_CLASSES, LOC_CLASSES, STAGES};
use crate::error::{Error, Result};
use crate::ops::Conv2dSpec;
use crate::params::{Binding, ParamBuilder};
use crate::tensor::Element;

fn upsample_to<T: Element>(g: &mut Graph<T>, x: Var, h: usize, w: usize) -> Result<Var> {
    let s = g.shape(x);
    if s[2] == h && s[3] == w {
        Ok(x)
    } else {
        g.upsample_bilinear(x, h, w)
    }
}

/// Per level 1×1 conv to the decoder width and bilinear upsampling to a
/// common size, then concatenation and a 1×1 fusion conv.
#[derive(Debug, Clone)]
pub struct CrossLevelFuse {
    pub level_proj: Vec<Conv>,
    pub fuse: Conv,
    pub width: usize,
}

impl CrossLevelFuse {
    pub fn new<T: Element>(b: &mut ParamBuilder<'_, T>, channels: &[usize; STAGES], width: usize) -> Self {
        let level_proj = channels
            .iter()
            .enumerate()
            .map(|(i, &c)| Conv::new(b, &format!("proj{}", i + 1), c, width, 1, Conv2dSpec::POINTWISE))
            .collect();
        Self { level_proj, fuse: Conv::new(b, "fuse", STAGES * width, width, 1, Conv2dSpec::POINTWISE), width }
    }

    /// Concatenated `[N, 4·width, h, w]` map of projected, upsampled levels.
    pub fn stacked<T: Element>(
        &self,
        g: &mut Graph<T>,
        p: &Binding,
        pyr: &FeaturePyramid,
        h: usize,
        w: usize,
    ) -> Result<Var> {
        let mut parts = Vec::with_capacity(STAGES);
        for (proj, &level) in self.level_proj.iter().zip(&pyr.levels) {
            let y = proj.forward(g, p, level)?;
            parts.push(upsample_to(g, y, h, w)?);
        }
        g.concat(&parts, 1)
    }

    pub fn forward<T: Element>(
        &self,
        g: &mut Graph<T>,
        p: &Binding,
        pyr: &FeaturePyramid,
        h: usize,
        w: usize,
    ) -> Result<Var> {
        let cat = self.stacked(g, p, pyr, h, w)?;
        self.fuse.forward(g, p, cat)
    }
}

#[derive(Debug, Clone)]
pub struct DualDecoder {
    pub loc: CrossLevelFuse,
    pub dam: CrossLevelFuse,
    pub loc_head: Conv,
    pub dam_head: Conv,
    pub scale_div: usize,
    pub addback: AddBack,
}

impl DualDecoder {
    pub fn new<T: Element>(b: &mut ParamBuilder<'_, T>, channels: &[usize; STAGES], cfg: &DecoderConfig) -> Self {
        let width = cfg.width;
        Self {
            loc: CrossLevelFuse::new(&mut b.scope("loc"), channels, width),
            dam: CrossLevelFuse::new(&mut b.scope("dam"), channels, width),
            loc_head: Conv::new(b, "loc_head", width, LOC_CLASSES, 1, Conv2dSpec::POINTWISE),
            dam_head: Conv::new(b, "dam_head", width, DAMAGE_CLASSES, 1, Conv2dSpec::POINTWISE),
            scale_div: cfg.scale_div,
            addback: cfg.addback,
        }
    }

    /// Fused `(F_loc, F_dam)` maps at the decode resolution, with the
    /// localization features already added into the damage branch.
    pub fn fused<T: Element>(
        &self,
        g: &mut Graph<T>,
        p: &Binding,
        loc: &FeaturePyramid,
        dam: &FeaturePyramid,
        h: usize,
        w: usize,
    ) -> Result<(Var, Var)> {
        if self.loc.width != self.dam.width {
            return Err(Error::Config(format!(
                "decoder widths differ: localization {} vs damage {}",
                self.loc.width, self.dam.width
            )));
        }
        match self.addback {
            AddBack::PostConv => {
                let f_loc = self.loc.forward(g, p, loc, h, w)?;
                let f_dam = self.dam.forward(g, p, dam, h, w)?;
                Ok((f_loc, g.add(f_dam, f_loc)?))
            }
            AddBack::PreConv => {
                let s_loc = self.loc.stacked(g, p, loc, h, w)?;
                let f_loc = self.loc.fuse.forward(g, p, s_loc)?;
                let s_dam = self.dam.stacked(g, p, dam, h, w)?;
                let mixed = g.add(s_dam, s_loc)?;
                Ok((f_loc, self.dam.fuse.forward(g, p, mixed)?))
            }
        }
    }

    /// `(loc_logits[N, 1, H, W], dam_logits[N, 5, H, W])` for input size `H × W`.
    pub fn forward<T: Element>(
        &self,
        g: &mut Graph<T>,
        p: &Binding,
        loc: &FeaturePyramid,
        dam: &FeaturePyramid,
        in_h: usize,
        in_w: usize,
    ) -> Result<(Var, Var)> {
        let (h, w) = (in_h / self.scale_div, in_w / self.scale_div);
        let (f_loc, f_dam) = self.fused(g, p, loc, dam, h, w)?;
        let zl = self.loc_head.forward(g, p, f_loc)?;
        let zd = self.dam_head.forward(g, p, f_dam)?;
        Ok((upsample_to(g, zl, in_h, in_w)?, upsample_to(g, zd, in_h, in_w)?))
    }
}

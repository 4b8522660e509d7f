//! Multitemporal fusion: concatenate pre/post features, merge with a conv,
//! then gate channels separately for the localization and damage tasks.

use super::encoder::FeaturePyramid;
use super::layers::{Conv, Linear};
use crate::autograd::{Graph, Var};
use crate::config::{FusionConfig, STAGES};
use crate::error::{Error, Result};
use crate::ops::Conv2dSpec;
use crate::params::{Binding, ParamBuilder};
use crate::tensor::Element;

/// Channel half of CBAM: `f ⊙ sigmoid(mlp(avgpool f) + mlp(maxpool f))`
/// with one shared `C → C/r → C` ReLU MLP.
#[derive(Debug, Clone)]
pub struct ChannelAttention {
    pub fc1: Linear,
    pub fc2: Linear,
    pub channels: usize,
}

impl ChannelAttention {
    pub fn new<T: Element>(b: &mut ParamBuilder<'_, T>, channels: usize, reduction: usize) -> Result<Self> {
        if reduction == 0 || channels % reduction != 0 {
            return Err(Error::Config(format!(
                "channel attention: {channels} channels not divisible by reduction {reduction}"
            )));
        }
        let hidden = channels / reduction;
        Ok(Self {
            fc1: Linear::new(b, "fc1", channels, hidden),
            fc2: Linear::new(b, "fc2", hidden, channels),
            channels,
        })
    }

    fn mlp<T: Element>(&self, g: &mut Graph<T>, p: &Binding, x: Var) -> Result<Var> {
        let h = self.fc1.forward(g, p, x)?;
        let h = g.relu(h)?;
        self.fc2.forward(g, p, h)
    }

    /// The `[N, C]` gate for `f[N, C, H, W]`.
    pub fn gate<T: Element>(&self, g: &mut Graph<T>, p: &Binding, f: Var) -> Result<Var> {
        let avg = g.global_avg_pool(f)?;
        let max = g.global_max_pool(f)?;
        let a = self.mlp(g, p, avg)?;
        let m = self.mlp(g, p, max)?;
        let s = g.add(a, m)?;
        g.sigmoid(s)
    }

    pub fn forward<T: Element>(&self, g: &mut Graph<T>, p: &Binding, f: Var) -> Result<Var> {
        let gate = self.gate(g, p, f)?;
        g.scale_channels(f, gate)
    }
}

#[derive(Debug, Clone)]
pub struct FusionLevel {
    /// One shared merge, or `[loc, dam]` when merges are duplicated per task.
    pub merge: Vec<Conv>,
    pub loc_attention: ChannelAttention,
    pub dam_attention: ChannelAttention,
}

impl FusionLevel {
    pub fn new<T: Element>(b: &mut ParamBuilder<'_, T>, channels: usize, cfg: &FusionConfig) -> Result<Self> {
        let spec = Conv2dSpec::new(1, cfg.kernel / 2);
        let merge = if cfg.dup_merge {
            vec![
                Conv::new(b, "merge_loc", 2 * channels, channels, cfg.kernel, spec),
                Conv::new(b, "merge_dam", 2 * channels, channels, cfg.kernel, spec),
            ]
        } else {
            vec![Conv::new(b, "merge", 2 * channels, channels, cfg.kernel, spec)]
        };
        Ok(Self {
            merge,
            loc_attention: ChannelAttention::new(&mut b.scope("ca_loc"), channels, cfg.reduction)?,
            dam_attention: ChannelAttention::new(&mut b.scope("ca_dam"), channels, cfg.reduction)?,
        })
    }

    /// Merged maps before gating, one per merge conv.
    pub fn merged<T: Element>(&self, g: &mut Graph<T>, p: &Binding, pre: Var, post: Var) -> Result<Vec<Var>> {
        if g.shape(pre) != g.shape(post) {
            return Err(Error::Input(format!(
                "fusion inputs differ in shape: {:?} vs {:?}",
                g.shape(pre),
                g.shape(post)
            )));
        }
        let cat = g.concat(&[pre, post], 1)?;
        self.merge.iter().map(|m| m.forward(g, p, cat)).collect()
    }

    /// `(f_loc, f_dam)` for one pyramid level.
    pub fn forward<T: Element>(&self, g: &mut Graph<T>, p: &Binding, pre: Var, post: Var) -> Result<(Var, Var)> {
        let merged = self.merged(g, p, pre, post)?;
        let (m_loc, m_dam) = (merged[0], *merged.last().expect("at least one merge"));
        let loc = self.loc_attention.forward(g, p, m_loc)?;
        let dam = self.dam_attention.forward(g, p, m_dam)?;
        Ok((loc, dam))
    }
}

#[derive(Debug, Clone)]
pub struct MtFusion {
    pub levels: Vec<FusionLevel>,
}

impl MtFusion {
    pub fn new<T: Element>(
        b: &mut ParamBuilder<'_, T>,
        channels: &[usize; STAGES],
        cfg: &FusionConfig,
    ) -> Result<Self> {
        let levels = channels
            .iter()
            .enumerate()
            .map(|(i, &c)| FusionLevel::new(&mut b.scope(&format!("level{}", i + 1)), c, cfg))
            .collect::<Result<_>>()?;
        Ok(Self { levels })
    }

    /// Returns `(localization pyramid, damage pyramid)`.
    pub fn forward<T: Element>(
        &self,
        g: &mut Graph<T>,
        p: &Binding,
        pre: &FeaturePyramid,
        post: &FeaturePyramid,
    ) -> Result<(FeaturePyramid, FeaturePyramid)> {
        let mut loc = Vec::with_capacity(STAGES);
        let mut dam = Vec::with_capacity(STAGES);
        for (i, level) in self.levels.iter().enumerate() {
            let (a, b) = (pre.levels[i], post.levels[i]);
            if g.shape(a) != g.shape(b) {
                return Err(Error::Input(format!(
                    "pyramid level {} mismatch: {:?} vs {:?}",
                    i + 1,
                    g.shape(a),
                    g.shape(b)
                )));
            }
            let (l, d) = level.forward(g, p, a, b)?;
            loc.push(l);
            dam.push(d);
        }
        Ok((
            FeaturePyramid { levels: loc.try_into().expect("four levels") },
            FeaturePyramid { levels: dam.try_into().expect("four levels") },
        ))
    }
}

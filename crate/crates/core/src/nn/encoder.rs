//! Hierarchical Mix-Transformer encoder shared by the pre- and post-event streams.

use super::layers::{to_spatial, to_tokens, Conv, Linear, Norm};
use crate::autograd::{Graph, Var};
use crate::config::{EncoderConfig, STAGES};
use crate::error::{Error, Result};
use crate::ops::Conv2dSpec;
use crate::params::{Binding, ParamBuilder};
use crate::tensor::Element;

/// Four feature maps `[N, C_i, H/2^(i+2), W/2^(i+2)]`, finest first.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FeaturePyramid {
    pub levels: [Var; STAGES],
}

/// Strided convolution followed by layer norm over channels; returns tokens.
#[derive(Debug, Clone)]
pub struct PatchEmbed {
    pub conv: Conv,
    pub norm: Norm,
    pub kernel: usize,
}

impl PatchEmbed {
    pub fn new<T: Element>(
        b: &mut ParamBuilder<'_, T>,
        cin: usize,
        cout: usize,
        geometry: (usize, usize, usize),
    ) -> Self {
        let (kernel, stride, pad) = geometry;
        Self {
            conv: Conv::new(b, "proj", cin, cout, kernel, Conv2dSpec::new(stride, pad)),
            norm: Norm::new(b, "norm", cout),
            kernel,
        }
    }

    /// `x[N, C, H, W]` to `(tokens[N, h·w, C'], h, w)`.
    pub fn forward<T: Element>(&self, g: &mut Graph<T>, p: &Binding, x: Var) -> Result<(Var, usize, usize)> {
        let s = g.shape(x).to_vec();
        let pad = self.conv.spec.pad;
        if s.len() != 4 || s[2] + 2 * pad < self.kernel || s[3] + 2 * pad < self.kernel {
            return Err(Error::Config(format!(
                "patch embedding input {s:?} is smaller than its {k}x{k} kernel",
                k = self.kernel
            )));
        }
        let y = self.conv.forward(g, p, x)?;
        let (h, w) = (g.shape(y)[2], g.shape(y)[3]);
        let t = to_tokens(g, y)?;
        Ok((self.norm.forward(g, p, t)?, h, w))
    }
}

/// Multi-head self-attention whose keys and values come from the token grid
/// downsampled by `sr_ratio` per axis (strided conv + layer norm).
#[derive(Debug, Clone)]
pub struct EfficientAttention {
    pub q: Linear,
    pub k: Linear,
    pub v: Linear,
    pub proj: Linear,
    pub reduce: Option<(Conv, Norm)>,
    pub heads: usize,
    pub sr_ratio: usize,
}

impl EfficientAttention {
    pub fn new<T: Element>(b: &mut ParamBuilder<'_, T>, c: usize, heads: usize, sr_ratio: usize) -> Self {
        let reduce = (sr_ratio > 1)
            .then(|| (Conv::new(b, "sr", c, c, sr_ratio, Conv2dSpec::new(sr_ratio, 0)), Norm::new(b, "sr_norm", c)));
        Self {
            q: Linear::new(b, "q", c, c),
            k: Linear::new(b, "k", c, c),
            v: Linear::new(b, "v", c, c),
            proj: Linear::new(b, "proj", c, c),
            reduce,
            heads,
            sr_ratio,
        }
    }

    /// Number of key/value tokens for an `h × w` grid.
    pub fn kv_len(&self, h: usize, w: usize) -> usize {
        (h / self.sr_ratio) * (w / self.sr_ratio)
    }

    pub fn forward<T: Element>(&self, g: &mut Graph<T>, p: &Binding, x: Var, h: usize, w: usize) -> Result<Var> {
        let s = g.shape(x).to_vec();
        if s.len() != 3 || s[1] != h * w {
            return Err(Error::Usage(format!("attention tokens {s:?} do not form a {h}x{w} grid")));
        }
        if h % self.sr_ratio != 0 || w % self.sr_ratio != 0 {
            return Err(Error::Config(format!(
                "token grid {h}x{w} is not divisible by sequence-reduction ratio {}",
                self.sr_ratio
            )));
        }
        let q = self.q.forward(g, p, x)?;
        let kv_src = match &self.reduce {
            Some((conv, norm)) => {
                let sp = to_spatial(g, x, h, w)?;
                let red = conv.forward(g, p, sp)?;
                let t = to_tokens(g, red)?;
                norm.forward(g, p, t)?
            }
            None => x,
        };
        let k = self.k.forward(g, p, kv_src)?;
        let v = self.v.forward(g, p, kv_src)?;
        let o = g.attention(q, k, v, self.heads)?;
        self.proj.forward(g, p, o)
    }
}

/// Linear expand, 3×3 depthwise conv on the token grid, GELU, linear project.
#[derive(Debug, Clone)]
pub struct MixFfn {
    pub fc1: Linear,
    pub dw: Conv,
    pub fc2: Linear,
}

impl MixFfn {
    pub fn new<T: Element>(b: &mut ParamBuilder<'_, T>, c: usize, expansion: usize) -> Self {
        let hidden = c * expansion;
        Self {
            fc1: Linear::new(b, "fc1", c, hidden),
            dw: Conv::new(b, "dwconv", hidden, hidden, 3, Conv2dSpec::new(1, 1).grouped(hidden)),
            fc2: Linear::new(b, "fc2", hidden, c),
        }
    }

    pub fn forward<T: Element>(&self, g: &mut Graph<T>, p: &Binding, x: Var, h: usize, w: usize) -> Result<Var> {
        let s = g.shape(x).to_vec();
        if s.len() != 3 || s[1] != h * w {
            return Err(Error::Usage(format!("mix-ffn tokens {s:?} do not form a {h}x{w} grid")));
        }
        let e = self.fc1.forward(g, p, x)?;
        let sp = to_spatial(g, e, h, w)?;
        let d = self.dw.forward(g, p, sp)?;
        let t = to_tokens(g, d)?;
        let a = g.gelu(t)?;
        self.fc2.forward(g, p, a)
    }
}

/// Pre-norm transformer block: `x + attn(ln(x))`, then `x + ffn(ln(x))`.
#[derive(Debug, Clone)]
pub struct Block {
    pub norm1: Norm,
    pub attn: EfficientAttention,
    pub norm2: Norm,
    pub ffn: MixFfn,
}

impl Block {
    pub fn forward<T: Element>(&self, g: &mut Graph<T>, p: &Binding, x: Var, h: usize, w: usize) -> Result<Var> {
        let n1 = self.norm1.forward(g, p, x)?;
        let a = self.attn.forward(g, p, n1, h, w)?;
        let x = g.add(x, a)?;
        let n2 = self.norm2.forward(g, p, x)?;
        let f = self.ffn.forward(g, p, n2, h, w)?;
        g.add(x, f)
    }
}

#[derive(Debug, Clone)]
pub struct Stage {
    pub embed: PatchEmbed,
    pub blocks: Vec<Block>,
}

impl Stage {
    /// `x[N, C_in, H, W] -> [N, C, h, w]`.
    pub fn forward<T: Element>(&self, g: &mut Graph<T>, p: &Binding, x: Var) -> Result<Var> {
        let (mut t, h, w) = self.embed.forward(g, p, x)?;
        for block in &self.blocks {
            t = block.forward(g, p, t, h, w)?;
        }
        to_spatial(g, t, h, w)
    }
}

#[derive(Debug, Clone)]
pub struct MitEncoder {
    pub stages: Vec<Stage>,
}

impl MitEncoder {
    pub fn new<T: Element>(b: &mut ParamBuilder<'_, T>, cfg: &EncoderConfig) -> Self {
        let mut cin = 3;
        let stages = (0..STAGES)
            .map(|s| {
                let mut sb = b.scope(&format!("stage{}", s + 1));
                let c = cfg.channels[s];
                let embed = {
                    let mut eb = sb.scope("embed");
                    PatchEmbed::new(&mut eb, cin, c, cfg.patch_mode.embed_geometry(s))
                };
                let blocks = (0..cfg.blocks[s])
                    .map(|i| {
                        let mut bb = sb.scope(&format!("block{i}"));
                        let norm1 = Norm::new(&mut bb, "norm1", c);
                        let attn = EfficientAttention::new(&mut bb.scope("attn"), c, cfg.heads[s], cfg.sr_ratios[s]);
                        let norm2 = Norm::new(&mut bb, "norm2", c);
                        let ffn = MixFfn::new(&mut bb.scope("ffn"), c, cfg.expansion);
                        Block { norm1, attn, norm2, ffn }
                    })
                    .collect();
                cin = c;
                Stage { embed, blocks }
            })
            .collect();
        Self { stages }
    }

    /// One stream: `x[N, 3, H, W]` to its feature pyramid.
    pub fn forward<T: Element>(&self, g: &mut Graph<T>, p: &Binding, x: Var) -> Result<FeaturePyramid> {
        let mut levels = Vec::with_capacity(STAGES);
        let mut cur = x;
        for stage in &self.stages {
            cur = stage.forward(g, p, cur)?;
            levels.push(cur);
        }
        Ok(FeaturePyramid { levels: levels.try_into().expect("four stages") })
    }

    /// Encodes both images with the same parameters. The pair is stacked on
    /// the batch axis and run as one pass; per-sample kernels make this
    /// bitwise identical to two separate passes.
    pub fn encode_siamese<T: Element>(
        &self,
        g: &mut Graph<T>,
        p: &Binding,
        pre: Var,
        post: Var,
    ) -> Result<(FeaturePyramid, FeaturePyramid)> {
        let (sa, sb) = (g.shape(pre).to_vec(), g.shape(post).to_vec());
        if sa != sb {
            return Err(Error::Input(format!("pre image {sa:?} and post image {sb:?} differ in shape")));
        }
        if sa.len() != 4 || sa[1] != 3 {
            return Err(Error::Input(format!("expected images shaped [N, 3, H, W], got {sa:?}")));
        }
        if sa[2] % 32 != 0 || sa[3] % 32 != 0 {
            return Err(Error::Input(format!("image size {}x{} is not divisible by 32", sa[2], sa[3])));
        }
        let n = sa[0];
        let both = g.concat(&[pre, post], 0)?;
        let joint = self.forward(g, p, both)?;
        let mut a = Vec::with_capacity(STAGES);
        let mut b = Vec::with_capacity(STAGES);
        for &level in &joint.levels {
            a.push(g.narrow(level, 0, 0, n)?);
            b.push(g.narrow(level, 0, n, n)?);
        }
        Ok((
            FeaturePyramid { levels: a.try_into().expect("four stages") },
            FeaturePyramid { levels: b.try_into().expect("four stages") },
        ))
    }
}

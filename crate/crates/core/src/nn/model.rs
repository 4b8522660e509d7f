use super::decoder::DualDecoder;
use super::encoder::{FeaturePyramid, MitEncoder};
use super::fusion::MtFusion;
use crate::autograd::{Graph, Var};
use crate::config::ModelConfig;
use crate::error::Result;
use crate::params::{Binding, ParamBuilder, ParamStore};
use crate::rng::SplitMix64;
use crate::tensor::Element;

#[derive(Debug, Clone, Copy)]
pub struct ModelOutput {
    pub loc_logits: Var,
    pub dam_logits: Var,
    pub pre: FeaturePyramid,
    pub post: FeaturePyramid,
    pub loc: FeaturePyramid,
    pub dam: FeaturePyramid,
}

/// Siamese encoder, multitemporal fusion and dual-task decoder.
#[derive(Debug, Clone)]
pub struct DamFormer {
    pub config: ModelConfig,
    pub encoder: MitEncoder,
    pub fusion: MtFusion,
    pub decoder: DualDecoder,
}

/// PRNG stream used for weight initialization.
const INIT_STREAM: u64 = 0x1417;

impl DamFormer {
    /// Builds the model and its freshly initialized parameters from `seed`.
    pub fn init<T: Element>(config: &ModelConfig, seed: u64) -> Result<(Self, ParamStore<T>)> {
        config.validate()?;
        let mut store = ParamStore::new();
        let mut rng = SplitMix64::for_stream(seed, INIT_STREAM);
        let mut b = ParamBuilder::new(&mut store, &mut rng);
        let channels = &config.encoder.channels;
        let encoder = MitEncoder::new(&mut b.scope("enc"), &config.encoder);
        let fusion = MtFusion::new(&mut b.scope("fus"), channels, &config.fusion)?;
        let decoder = DualDecoder::new(&mut b.scope("dec"), channels, &config.decoder);
        Ok((Self { config: config.clone(), encoder, fusion, decoder }, store))
    }

    /// Full forward pass for image batches `pre, post [N, 3, H, W]`.
    pub fn forward<T: Element>(&self, g: &mut Graph<T>, p: &Binding, pre: Var, post: Var) -> Result<ModelOutput> {
        let (h, w) = (g.shape(pre)[2], g.shape(pre)[3]);
        let (pyr_pre, pyr_post) = self.encoder.encode_siamese(g, p, pre, post)?;
        let (loc, dam) = self.fusion.forward(g, p, &pyr_pre, &pyr_post)?;
        let (loc_logits, dam_logits) = self.decoder.forward(g, p, &loc, &dam, h, w)?;
        Ok(ModelOutput { loc_logits, dam_logits, pre: pyr_pre, post: pyr_post, loc, dam })
    }
}

//! Model components. Modules hold [`ParamId`](crate::params::ParamId)s and
//! run against a [`Binding`](crate::params::Binding) of their parameter store.

mod decoder;
mod encoder;
mod fusion;
pub mod layers;
mod model;

pub use decoder::{CrossLevelFuse, DualDecoder};
pub use encoder::{Block, EfficientAttention, FeaturePyramid, MitEncoder, MixFfn, PatchEmbed, Stage};
pub use fusion::{ChannelAttention, FusionLevel, MtFusion};
pub use model::{DamFormer, ModelOutput};

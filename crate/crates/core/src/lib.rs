//! DamFormer: a dual-task siamese Mix-Transformer for building damage
//! assessment from pre/post-disaster image pairs, built on a small
//! reverse-mode autodiff engine.
//!
//! Pipeline: [`nn::MitEncoder`] encodes both images with shared weights,
//! [`nn::MtFusion`] merges the two feature pyramids into localization and
//! damage pyramids, [`nn::DualDecoder`] turns them into per-pixel logits, and
//! [`loss::compound_loss`] scores them. [`train`] ties it together with
//! [`optim::AdamW`], [`metrics`] and the synthetic data in [`data`].

// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod autograd;
pub mod checkpoint;
pub mod config;
pub mod data;
pub mod error;
pub mod gradcheck;
pub mod loss;
pub mod mask;
pub mod metrics;
pub mod nn;
pub mod ops;
pub mod optim;
pub mod params;
pub mod rng;
pub mod tensor;
pub mod train;

pub use autograd::{Graph, Var};
pub use error::{Error, Result};
pub use tensor::{Element, Tensor};

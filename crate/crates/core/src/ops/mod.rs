//! Differentiable ops, implemented as methods on [`Graph`](crate::autograd::Graph).
//!
//! Broadcasting is limited to bias addition, scalar ops and the per-channel
//! gate of [`scale_channels`](crate::autograd::Graph::scale_channels); every
//! other binary op requires identical shapes.

mod attention;
pub(crate) mod basic;
mod conv;
mod linalg;
pub(crate) mod norm;
mod pool;
mod resize;

pub use conv::Conv2dSpec;

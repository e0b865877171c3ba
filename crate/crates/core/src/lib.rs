//! Lightweight dual multiscale residual segmentation network (LDMRes-Net)
//! implemented on hand-written tensor kernels.
//!
//! * [`ops`]: differentiable primitives (convolution, batch norm, pooling, ...)
//! * [`arch`]: the encoder/decoder graph, its parameters and backward pass
//! * [`train`]: dice loss, ADAM, augmentation and the training loop
//! * [`metrics`]: confusion counts, Se/Sp/Acc/F1, closed-form and ROC AUC
//! * [`infer`]: whole-image prediction and dataset evaluation
//! * [`io`]: model file format, PGM/PPM images and dataset manifests

pub mod arch;
pub mod error;
pub mod infer;
pub mod io;
pub mod mask;
pub mod metrics;
pub mod ops;
mod par;
pub mod rng;
pub mod tensor;
pub mod train;

#[cfg(test)]
pub(crate) mod testutil;

pub use error::{Error, Result};
pub use mask::Mask;
pub use tensor::{Dims, Tensor4};

//! The LDMRes-Net graph: parameters, layers, blocks and the full network.

mod block;
mod layers;
mod network;
mod params;

pub use block::DualMrb;
pub use layers::ConvBn;
pub use network::{
    build_network, DecoderStage, EncoderStage, LayerSummary, Network, NetworkConfig, Tape, Trace, Transition,
    REFERENCE_TOTAL_PARAMS, REFERENCE_TRAINABLE_PARAMS, SPATIAL_DIVISOR,
};
pub use params::{Gradients, Param, ParamId, ParamKind, ParamStore};

use crate::error::Result;
use crate::ops::Mode;
use crate::tensor::Tensor4;

/// Runs one dual multiscale residual block; returns `(out, S1)`.
pub fn dual_mrb_forward(
    block: &DualMrb,
    store: &mut ParamStore,
    x: &Tensor4,
    skip: Option<&Tensor4>,
    mode: Mode,
) -> Result<(Tensor4, Tensor4)> {
    block.forward(store, x, skip, mode)
}

//! Differentiable tensor primitives. Each forward has a matching backward that
//! is the exact adjoint of its linearization.

mod activation;
mod batchnorm;
mod conv;
mod pool;

pub use activation::{add, add_backward, relu, relu_backward, softmax_backward, softmax_channel};
pub use batchnorm::{
    batchnorm, batchnorm_backward, batchnorm_infer_backward, BatchNormParams, BnGrads, BnSaved, Mode, BN_EPS,
    BN_MOMENTUM,
};
pub use conv::{conv2d, conv2d_backward, ConvGrads, ConvParams};
pub use pool::{maxpool2x2, maxpool2x2_backward, upsample2x_backward, upsample2x_nearest, PoolIndices};

pub(crate) use batchnorm::{bn_infer_forward, bn_train_backward, bn_train_forward, update_running_stats};
pub(crate) use conv::{conv2d_backward_raw, conv2d_forward};

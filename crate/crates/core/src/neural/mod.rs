//! From-scratch neural machinery for the soft-bit receiver.
//!
//! Tensors are NHWC (`batch × T × F × channels`) so that the channel axis,
//! which every inner loop runs over, is contiguous.

mod adam;
mod checkpoint;
mod conet;
mod conv;
mod gradcheck;
mod loss;
mod shared;
mod tensor;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use checkpoint::{read_checkpoint, write_checkpoint, Checkpoint};
pub use conet::{
    conet_backward, conet_forward, conet_infer, copy_into, init_params, ActivationCache,
    CoNetConfig, GradientSet, ModelParams,
};
pub use conv::{conv2d, conv2d_backward, ConvLayerParams};
pub use gradcheck::{gradcheck, relative_error, LayerCheck};
pub use loss::{masked_bce_grad, masked_bce_loss};
pub use shared::SharedParams;
pub use tensor::{Real, Tensor4};

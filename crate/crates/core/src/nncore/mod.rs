//! Differentiable primitives for the temporal head: dilated 1D convolution,
//! ReLU, linear temporal upsampling, softmax, frame-wise cross-entropy,
//! temporal pooling and momentum SGD. Every layer has an exact backward pass.

pub mod conv;
pub mod gradcheck;
pub mod loss;
pub mod ops;
pub mod optim;
mod tensor;

pub use conv::{dilated_conv1d_backward, dilated_conv1d_forward, ConvGrads, ConvLayer1D};
pub use gradcheck::{gradient_check, GradCheckReport, Objective};
pub use loss::{framewise_cross_entropy, one_hot, LossInput};
pub use ops::{
    bilinear_upsample_1d, bilinear_upsample_1d_backward, compensated_sum, framewise_softmax, relu, relu_backward,
    softmax_vec, temporal_pool, temporal_pool_backward, Pooling,
};
pub use optim::{sgd_update, OptimizerState, ParamMut};
pub use tensor::SeqTensor;

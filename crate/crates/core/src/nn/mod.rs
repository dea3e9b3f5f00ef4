//! Minimal CPU tensor engine for the enhancement network: 3×3 convolution,
//! batch norm, residual blocks, L1 loss, Adam and a weight container.

pub mod adam;
pub mod batchnorm;
pub mod conv;
pub mod loss;
pub mod network;
pub mod tensor;
pub mod weights;

pub use adam::{adam_step, AdamState};
pub use batchnorm::{BatchNorm, Mode, BN_EPS};
pub use conv::{conv2d_forward, Activation, Conv2d};
pub use loss::l1_loss;
pub use network::{NetConfig, QENetwork, ResBlock};
pub use tensor::Tensor;
pub use weights::{load_weights, save_weights, weights_from_bytes, weights_to_bytes};

//! From-scratch 7-layer strided CNN with batch normalization, ReLU, global
//! average pooling, an affine two-class head, manual backpropagation, Adam,
//! and finite-difference gradient checking.

pub mod adam;
pub mod gradcheck;
pub mod model;
pub mod ops;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use gradcheck::{
    fd_compare, grad_check, model_loss, model_loss_gradients, GradCheckReport,
    DEFAULT_COORDS_PER_TENSOR, DEFAULT_H, GRADCHECK_THRESHOLD,
};
pub use model::{
    Architecture, ForwardCache, Gradients, ModelParams, DEFAULT_BN_EPS, DEFAULT_BN_MOMENTUM,
    DESK_INPUT_LEN, FULL_INPUT_LEN,
};
pub use ops::{softmax_xent, LayerSpec};

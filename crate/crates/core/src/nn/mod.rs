//! Minimal dense-tensor neural-network engine: the fixed layer set the
//! model needs, sparse categorical cross-entropy, and Adam.

pub mod adam;
pub mod layers;
pub mod loss;
pub mod tensor;

pub use adam::{adam_step, AdamState};
pub use layers::{
    conv2d_backward, conv2d_forward, dense_backward, dense_forward, maxpool2_backward,
    maxpool2_forward, param_count, relu_backward, relu_forward, softmax, DenseActivation,
    LayerSpec,
};
pub use loss::sparse_cce;
pub use tensor::{Scalar, Tensor};

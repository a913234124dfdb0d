//! Minimal dense/convolutional network substrate: tensors, layer kernels,
//! reverse-mode backward passes, SGD and checkpoints.

pub mod checkpoint;
pub mod gradcheck;
pub mod layer;
pub mod ops;
pub mod optim;
pub mod sequential;
pub mod tensor;

pub use checkpoint::{Checkpoint, Section};
pub use layer::{he_normal, Layer, LayerSpec, Parameter};
pub use ops::{
    concat, conv2d, dense, global_avg_pool, maxpool2d, relu, softmax, softmax_cross_entropy,
    softmax_cross_entropy_batch, split, Padding,
};
pub use optim::Sgd;
pub use sequential::Sequential;
pub use tensor::Tensor;

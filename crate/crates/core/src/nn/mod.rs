//! Minimal neural-network engine: tensors, tape autodiff, sequential models,
//! soft-target cross-entropy and momentum SGD.

pub mod checkpoint;
pub mod loss;
pub mod model;
pub mod optim;
pub mod tape;
pub mod tensor;

pub use loss::{loss_soft_ce, Prediction, SoftLabel};
pub use model::{conv_layers, mlp_layers, GradientSet, Layer, Model};
pub use optim::{step_decay_lr, Sgd};
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;

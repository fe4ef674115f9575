//! Adaptive per-bucket soft labels for augmented training data.
//!
//! Each augmentation family maps a sample to a distance bucket. After every
//! epoch the true-class confidence of a bucket moves by `α·ECE` against the
//! sign of `confidence − accuracy`, measured on a validation set augmented
//! with the same bucket. The crate carries its own small autodiff engine so
//! that training, PGD attacks and calibration run without external
//! frameworks.

pub mod attacks;
pub mod augment;
pub mod calibration;
pub mod data;
pub mod error;
pub mod harness;
pub mod image;
pub mod labels;
pub mod nn;
pub mod rng;
pub mod scalar;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Tensor32 = nn::Tensor<f32>;
pub type Tensor64 = nn::Tensor<f64>;
pub type Image32 = image::Image<f32>;
pub type Image64 = image::Image<f64>;
pub type Model32 = nn::Model<f32>;
pub type Model64 = nn::Model<f64>;
pub type Dataset32 = data::Dataset<f32>;
pub type Dataset64 = data::Dataset<f64>;

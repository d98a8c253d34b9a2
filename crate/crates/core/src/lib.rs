//! Multi-scale dual-channel attention network for binary medical image
//! segmentation, built on a small reverse-mode autodiff engine.
//!
//! All numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! at the bottom of this file name the two concrete instantiations. Training
//! runs in `f32`, gradient verification in `f64`.

pub mod analysis;
pub mod autograd;
pub mod blocks;
pub mod data;
pub mod error;
pub mod gradcheck;
pub mod layers;
pub mod metrics;
pub mod network;
pub mod parallel;
pub mod params;
pub mod rng;
pub mod scalar;
pub mod tensor;
pub mod trainer;

pub use autograd::{Activation, Axis, ConvOpts, NormConfig, Tape, Var};
pub use error::{Error, Result};
pub use network::{Model, ModelConfig, Variant};
pub use params::{ParamId, ParamStore, Session};
pub use scalar::{DType, Scalar};
pub use tensor::{Init, Tensor};

pub type Tensor32 = Tensor<f32>;
pub type Tensor64 = Tensor<f64>;
pub type Tape32 = Tape<f32>;
pub type Tape64 = Tape<f64>;
pub type Model32 = Model<f32>;
pub type Model64 = Model<f64>;

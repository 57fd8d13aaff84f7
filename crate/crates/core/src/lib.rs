//! Arbitrary artistic style transfer at configurable scale.
//!
//! A style prediction network maps a style image to the per-channel
//! scale/shift constants of every conditional instance normalization in a
//! feed-forward transfer network. Both are trained jointly against Gram-matrix
//! style loss and feature content loss computed by a fixed loss network.
//!
//! All numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below name the common instantiations.

pub mod analysis;
pub mod error;
pub mod gradcheck;
pub mod io;
pub mod losses;
pub mod networks;
pub mod normalization;
pub mod ops;
pub mod params;
pub mod scalar;
pub mod tape;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
pub use scalar::{DType, Scalar};
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;

pub type Tensor64 = Tensor<f64>;
pub type Tensor32 = Tensor<f32>;
pub type Tape64 = Tape<f64>;
pub type Tape32 = Tape<f32>;
pub type StyleModel64 = networks::StyleModel<f64>;
pub type StyleModel32 = networks::StyleModel<f32>;
pub type StyleEmbedding64 = networks::StyleEmbedding<f64>;
pub type LossNetwork64 = losses::LossNetwork<f64>;
pub type LossNetwork32 = losses::LossNetwork<f32>;

//! Forward and backward kernels for every differentiable primitive.
//!
//! These are plain functions over [`Tensor`](crate::Tensor) values; the
//! [`Tape`](crate::tape::Tape) records them and chains the backward kernels.

mod conv;
mod pad;
mod pointwise;
mod reduce;
mod resample;

pub use conv::{conv2d, conv2d_output_dims, conv2d_valid, conv2d_valid_backward, Padding};
pub use pad::{crop, reflect_pad, reflect_pad_backward, Pad4};
pub use pointwise::{add, elementwise, mul, relu, scale, sigmoid, sub, Elementwise};
pub use reduce::{
    gram_backward, gram_matrix, linear, linear_backward, spatial_mean, spatial_mean_backward, spatial_moments,
};
pub use resample::{resize_bilinear, resize_nearest, upsample_nearest, upsample_nearest_backward};

//! Equivariant imaging with projective transformations.
//!
//! Everything numeric is generic over [`Scalar`] (`f32` or `f64`);
//! single- and double-precision aliases are exported below.

pub mod autodiff;
pub mod error;
pub mod image;
pub mod linear;
pub mod losses;
pub mod metrics;
pub mod models;
pub mod physics;
pub mod projective;
pub mod scalar;
pub mod synth;
pub mod warp;

pub use error::{Error, Result};
pub use image::Image;
pub use linear::LinearMap;
pub use scalar::Scalar;

pub type Image32 = image::Image<f32>;
pub type Image64 = image::Image<f64>;
pub type Homography32 = projective::Homography<f32>;
pub type Homography64 = projective::Homography<f64>;
pub type Mat3f32 = projective::Mat3<f32>;
pub type Mat3f64 = projective::Mat3<f64>;
pub type WarpTable32 = warp::WarpTable<f32>;
pub type WarpTable64 = warp::WarpTable<f64>;
pub type Tape32 = autodiff::Tape<f32>;
pub type Tape64 = autodiff::Tape<f64>;
pub type Tensor32 = autodiff::Tensor<f32>;
pub type Tensor64 = autodiff::Tensor<f64>;
pub type ReconNet32 = models::ReconNet<f32>;
pub type ReconNet64 = models::ReconNet<f64>;
pub type ForwardOperator32 = physics::ForwardOperator<f32>;
pub type ForwardOperator64 = physics::ForwardOperator<f64>;

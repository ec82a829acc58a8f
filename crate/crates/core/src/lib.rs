//! Sketch-to-painting synthesis for a single artwork.
//!
//! The pipeline builds a clustered bank of multi-resolution patches from a
//! source painting, trains a two-stage conditional GAN whose second stage
//! attends to reference patches drawn from the bank, and generates large
//! canvases tile by tile with linear cross-fade blending.
//!
//! All numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the working precision.

pub mod attention;
pub mod autodiff;
pub mod bank;
pub mod canvas;
mod codec;
pub mod error;
pub mod evaluation;
pub mod features;
pub mod gradcheck;
pub mod imageio;
pub mod losses;
pub mod networks;
pub mod nn;
pub mod ops;
pub mod optim;
pub mod scalar;
pub mod synth;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
pub use scalar::Scalar;
pub use tensor::{Parameter, Tensor};

/// Stride ratios and other exact fractions.
pub type Ratio = num_rational::Ratio<usize>;

pub type Tensor32 = Tensor<f32>;
pub type Tensor64 = Tensor<f64>;
pub type Graph32 = autodiff::Graph<f32>;
pub type Graph64 = autodiff::Graph<f64>;
pub type ModelBundle32 = networks::ModelBundle<f32>;
pub type ModelBundle64 = networks::ModelBundle<f64>;
pub type FeatureExtractor32 = features::FeatureExtractor<f32>;
pub type FeatureExtractor64 = features::FeatureExtractor<f64>;

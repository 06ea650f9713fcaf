//! Opinion-unaware blind image quality assessment.
//!
//! A benchmark multivariate Gaussian is fitted over multi-scale deep
//! feature statistics of pristine images; a test image is scored by the
//! Mahalanobis-type distance between its own feature Gaussian and the
//! benchmark. The crate also carries the evaluation harness used to compare
//! scores against subjective ratings.
//!
//! All numeric code is generic over [`Real`] (`f32` or `f64`); the aliases
//! below fix it to `f64`, which is what the command-line tool uses.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod backbone;
pub mod datasets;
mod error;
pub mod eval;
pub mod filter;
pub mod linalg;
pub mod mvg;
pub mod pipeline;
pub mod pyramid;
mod scalar;
pub mod stats;

pub use error::{Error, Result};
pub use scalar::Real;

#[cfg(feature = "onnx")]
pub use backbone::{load_backbone, load_backbone_with_manifest};
pub use backbone::{synthetic_backbone, BackboneHandle, FeaturePyramid, PreprocessSpec};
pub use mvg::{fit_mvg, load_model, mvg_distance, save_model, MvgModel, SampleMatrix};
pub use pipeline::{collect_samples, fit_benchmark, score_image, PipelineConfig, QualityScore};
pub use pyramid::{downsample, fuse_pyramid, FusedFeatureMap};
pub use stats::{compute_stats, StatBundle};

/// Double-precision benchmark or test model.
pub type Model = mvg::MvgModel<f64>;
/// Single-precision benchmark or test model.
pub type Model32 = mvg::MvgModel<f32>;
pub type Samples = mvg::SampleMatrix<f64>;
pub type Pyramid = backbone::FeaturePyramid<f64>;
pub type FusedMap = pyramid::FusedFeatureMap<f64>;
pub type Stats = stats::StatBundle<f64>;
pub type Config = pipeline::PipelineConfig<f64>;
pub type Report = eval::EvalReport<f64>;
/// A decoded `3 x H x W` RGB image with values in `[0, 1]`.
pub type Image = ndarray::Array3<f64>;

//! Core of the densefit toolkit: a parametric skinned human body model, a
//! differentiable IUV rasterizer, pixel-to-surface correspondence search, the
//! loss suite with analytic gradients, an analysis-by-synthesis fitter,
//! synthetic-sample generators, and evaluation metrics.
//!
//! Everything in this crate is pure computation over in-memory data. File
//! formats, dataset layout and the command-line interface live in the
//! companion `densefit` crate. The crate is `no_std`-compatible (with `alloc`)
//! when built without the default `std` feature.
//!
//! Conventions used throughout:
//! - world frame: X right, Y down (aligned with image rows), Z away from the
//!   camera; depth increases with Z and smaller depth wins the z-test;
//! - pixel `(row i, column j)` has center `(j + 0.5, i + 0.5)` in pixel units;
//! - all internal arithmetic is `f64`; image planes and file formats narrow
//!   to `f32`.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod body;
pub mod camera;
pub mod correspond;
pub mod fit;
pub mod gradcheck;
pub mod loss;
pub mod math;
pub mod metrics;
pub mod raster;
pub mod rng;
pub mod synth;

#[cfg(test)]
pub(crate) mod testutil;

pub use body::{
    apply_shape, build_procedural_template, forward_kinematics, linear_blend_skinning,
    rodrigues, rodrigues_jacobian, select_lsp14, BodyError, BodyModel, BodyState, PoseParams,
    PosedBody, ShapeParams, Skeleton, SkeletonPreset, TemplateConfig, TemplateMesh,
};
pub use camera::CameraParams;
pub use correspond::{build_iuv_index, match_pixels, CorrespondencePair, CorrespondenceSet};
pub use fit::{fit, FitConfig, FitError, FitResult};
pub use loss::{GradientVector, LossReport, SupervisionFlags, TermWeights};
pub use raster::{rasterize, soft_part_masks, IuvImage, RasterTrace, SoftMasks};

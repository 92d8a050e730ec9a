//! Photon-mapping renderer with a learned kernel-prediction density
//! estimator.
//!
//! The pipeline: trace photons from area lights and keep only those whose
//! first bounce after the light was specular (the caustic-forming paths),
//! reconstruct their radiance at shading points either with classic kernel
//! density estimation or with a small network that predicts per-photon
//! kernel weights, path-trace everything else with the specular-light family
//! excluded, and composite the two layers.
//!
//! Core math (vectors, kd-tree, kernels, the network) is generic over the
//! [`math::Real`] scalar; the pipeline itself runs on the [`Float`] alias.

// Guards like `!(r > 0.0)` deliberately reject NaN along with the
// out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod density;
pub mod eval;
pub mod image;
pub mod kdtree;
pub mod math;
pub mod metrics;
pub mod nn;
pub mod photon;
pub mod pt;
pub mod rng;
pub mod scene;

/// Scalar used by the rendering pipeline.
pub type Float = f64;
/// Spatial vector in pipeline precision.
pub type Vec3 = math::Vector3<Float>;
/// Linear color in pipeline precision.
pub type Rgb = math::Rgb<Float>;

/// Ray-offset epsilon guarding against self-intersection (scene units).
pub const T_MIN: Float = 1e-4;

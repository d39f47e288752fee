//! Regional, multi-resolution rigid registration for stacks of serial
//! whole-slide tissue sections.
//!
//! The pipeline runs in four stages:
//!
//! 1. [`preprocess`]: grayscale conversion, tissue masking and convex-hull
//!    cleaning of each slide.
//! 2. [`mumford_shah`] + [`global_align`]: piecewise-constant segmentation
//!    followed by an exhaustive rigid search that roughly aligns whole slides.
//! 3. [`sift`] + [`roi_register`]: a coarse-to-fine cascade that focuses on a
//!    user-chosen region of interest, choosing at every level the best rigid
//!    hypothesis built from triples of feature matches.
//! 4. [`eval`]: lumen-mask overlap scoring of the resulting chain.
//!
//! [`phantom`] produces synthetic stacks with known ground truth.
//!
//! All numeric code is generic over [`Scalar`] (`f32` or `f64`); the
//! unsuffixed aliases below pick `f64`, which is what the pipeline uses.

pub mod error;
pub mod eval;
pub mod global_align;
pub mod image;
pub mod io;
pub mod mumford_shah;
pub mod phantom;
pub mod preprocess;
pub mod pyramid;
pub mod roi;
pub mod roi_register;
pub mod scalar;
pub mod sift;
pub mod transform;
pub mod warp;

pub use error::{Error, Result};
pub use image::{BinaryMask, Image, PixelWindow};
pub use roi::RoiBox;
pub use scalar::Scalar;
pub use transform::Rigid;
pub use warp::Interpolation;

pub type GrayImage = Image<f64>;
pub type GrayImageF32 = Image<f32>;
pub type RigidTransform2D = Rigid<f64>;
pub type RigidTransform2DF32 = Rigid<f32>;
pub type ImagePyramid = pyramid::Pyramid<f64>;
pub type LabelImage = mumford_shah::LabelImage<f64>;
pub type RegistrationChain = roi_register::RegistrationChain<f64>;

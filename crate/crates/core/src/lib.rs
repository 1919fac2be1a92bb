//! Polar-sine piecewise affine augmentation for axial CT/MR slices.
//!
//! The pipeline resizes a slice, optionally blanks everything outside the
//! reconstruction circle (derived from DICOM geometry, which removes the
//! scan table), distorts it by moving a grid of control points along
//! circles about the slice center, and finally normalizes intensities.
//! A keypoint-matching similarity score helps pick distortion strengths
//! that keep the anatomy recognisable.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod augment;
pub mod bench;
pub mod dicom;
pub mod error;
pub mod geometry;
pub mod image;
pub mod metrics;
pub mod phantom;
pub mod raster;
pub mod search;
pub mod similarity;
pub mod table;
pub mod warp;

pub use error::{Error, Result};
pub use image::{ImageGrid, PixelSemantics};

//! Realistic low-resolution / high-resolution pair generation for
//! real-world super-resolution, plus the evaluation tooling used to score
//! super-resolved outputs.
//!
//! The degradation model applied to a clean image is
//! `LR = jpeg(downsample(HR * k, s) + n)`: a blur kernel drawn from a pool,
//! stride-`s` subsampling, additive sensor-noise patches harvested from real
//! images, and JPEG compression artifacts.

pub mod degrade;
pub mod error;
pub mod fsutil;
pub mod image;
pub mod io;
pub mod jpeg;
pub mod kernels;
pub mod losses;
pub mod metrics;
pub mod mor;
pub mod noise;
pub mod parallel;
pub mod resample;
pub mod seed;

pub use crate::error::{Error, Result};
pub use crate::image::Image;

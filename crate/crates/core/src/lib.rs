//! Numerical core for Retinex-informed concealed object analysis.
//!
//! Everything in this crate is a pure function of its inputs and runs without
//! `std`: dense rasters and their windowed statistics, a variational
//! illumination/reflectance solver, regional discriminability statistics and
//! the gap bound that relates them, a synthetic two-region image generator,
//! gap-attention maps, segmentation loss evaluators and a small threshold
//! segmentation pipeline. File formats, the command line and parallel
//! drivers live in the `ridekit` companion crate.
#![no_std]
#![forbid(unsafe_code)]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

#[cfg(any(test, feature = "std"))]
extern crate std;

pub mod dga;
pub mod disc;
mod error;
pub mod image;
pub mod losses;
mod math;
pub mod pipeline;
pub mod retinex;
pub mod synth;

pub use error::{Error, Result};
pub use image::{BinaryMask, Domain, GradientPair, ImageGrid};

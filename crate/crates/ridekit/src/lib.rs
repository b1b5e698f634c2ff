#![allow(clippy::neg_cmp_op_on_partial_ord)]

//! File formats, run manifests, the parallel sweep driver and the command
//! line for `ridekit-core`.

pub mod cli;
pub mod config;
pub mod error;
pub mod manifest;
pub mod raster;
pub mod report;
pub mod sweep;

pub use error::{Error, Result};

//! Allocation-only building blocks for mapping water surfaces from dual-polarization
//! SAR backscatter.
//!
//! The crate is `no_std` (it needs `alloc`) and performs no IO. Everything that
//! touches the filesystem, the command line or worker pools lives in the
//! `aquamosaic` companion crate.
//!
//! Module map:
//!
//! - [`grid`], [`raster`], [`quantize`], [`tiling`]: georeferenced containers, the
//!   dB → u8 storage scaling and grid algebra (pad, retile, resample, project).
//! - [`shade`]: terrain-shade exclusion mask from a DEM.
//! - [`unet`]: a from-scratch U-Net with backpropagation, BCE + Dice loss and Adam.
//! - [`train`]: sample preparation, flip augmentation, training loop and evaluation.
//! - [`mosaic`]: sliding-window scene prediction, compositing, gap-fill,
//!   occurrence and recurrence layers.
//! - [`qa`]: cloud-artifact screening of per-tile water counts and correction.
//! - [`metrics`]: confusion counts, precision/recall/F1, class cross-tabs, area
//!   series and gauge correlation.
//! - [`synth`]: a seeded synthetic basin used by the demo and the test suites.
#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod error;
pub mod grid;
pub mod metrics;
pub mod mosaic;
pub mod qa;
pub mod quantize;
pub mod raster;
pub mod shade;
pub mod synth;
pub mod tiling;
pub mod train;
pub mod unet;

pub use chrono::NaiveDate;
pub use error::{Error, Result};
pub use grid::GridRef;
pub use raster::{
    BackscatterRaster, DemRaster, ProbabilityRaster, Raster, ShadeMask, WaterMask,
};

//! Storage formats, pipeline stages and the synthetic demo workspace built on
//! `aquamosaic-core`.

pub mod config;
pub mod demo;
pub mod error;
pub mod format;
pub mod io;
pub mod pipeline;
pub mod weights;

pub use aquamosaic_core as core;

//! Independent oracles shared by the integration tests and the acceptance
//! suite.

#![allow(dead_code)]

pub mod mosaic;
pub mod shade;
pub mod unet;

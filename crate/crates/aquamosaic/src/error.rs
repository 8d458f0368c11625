use std::path::{Path, PathBuf};

use aquamosaic_core::unet::UNetConfig;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum FormatError {
    #[error("not an AQMR raster (magic {0:?})")]
    BadMagic([u8; 4]),
    #[error("unsupported version {0}")]
    UnsupportedVersion(u16),
    #[error("truncated payload: need {needed} bytes, file has {available}")]
    Truncated { needed: usize, available: usize },
    #[error("checksum failure: stored {stored:#010x}, computed {computed:#010x}")]
    Checksum { stored: u32, computed: u32 },
    #[error("unknown sample type {0}")]
    UnknownDtype(u8),
    #[error("expected sample type {expected}, found {found}")]
    WrongDtype { expected: u8, found: u8 },
    #[error("bad header: {0}")]
    Header(String),
}

#[derive(Debug, Error, PartialEq)]
pub enum WeightsError {
    #[error("not an AQMW weight file")]
    BadMagic,
    #[error("unsupported version {0}")]
    UnsupportedVersion(u16),
    #[error("truncated weight file")]
    Truncated,
    #[error("checksum failure: stored {stored:#010x}, computed {computed:#010x}")]
    Checksum { stored: u32, computed: u32 },
    #[error("config mismatch: expected {expected:?}, file has {found:?}")]
    ConfigMismatch { expected: UNetConfig, found: UNetConfig },
    #[error("shape mismatch: {0}")]
    Shape(String),
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Format { path: PathBuf, source: FormatError },
    #[error("{path}: {source}")]
    Weights { path: PathBuf, source: WeightsError },
    #[error("weights not found: {0}")]
    WeightsNotFound(PathBuf),
    #[error("{path}: {message}")]
    Table { path: PathBuf, message: String },
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] aquamosaic_core::Error),
    #[error("stage {stage} failed: {source}")]
    Stage { stage: &'static str, source: Box<Error> },
}

impl Error {
    /// Process exit status: 2 configuration, 3 input data, 4 stage failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Core(e) if is_config_error(e) => 2,
            Error::Stage { .. } => 4,
            _ => 3,
        }
    }

    pub fn in_stage(self, stage: &'static str) -> Self {
        match self {
            Error::Config(_) | Error::Stage { .. } => self,
            other => Error::Stage { stage, source: Box::new(other) },
        }
    }
}

fn is_config_error(e: &aquamosaic_core::Error) -> bool {
    use aquamosaic_core::Error as E;
    matches!(e, E::InvalidConfig(_) | E::InvalidTiling { .. } | E::InvalidFactor(_))
}

pub fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io { path: path.to_path_buf(), source }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

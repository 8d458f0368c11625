use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid backscatter: {0} dB is not finite")]
    InvalidBackscatter(f64),
    #[error("nodata pixel cannot be dequantized")]
    NodataPixel,
    #[error("invalid grid: {0}")]
    InvalidGrid(&'static str),
    #[error("raster payload holds {got} values, expected {expected}")]
    DataLength { expected: usize, got: usize },
    #[error("tile size {tile} must exceed twice the overlap {overlap}")]
    InvalidTiling { tile: usize, overlap: usize },
    #[error("target {target_w}x{target_h} is smaller than source {source_w}x{source_h}")]
    TargetTooSmall {
        target_w: usize,
        target_h: usize,
        source_w: usize,
        source_h: usize,
    },
    #[error("window {w}x{h} at ({x0},{y0}) exceeds raster bounds")]
    WindowOutOfBounds { x0: usize, y0: usize, w: usize, h: usize },
    #[error("aggregation factor must be at least 1, got {0}")]
    InvalidFactor(usize),
    #[error("grid mismatch: {0}")]
    GridMismatch(&'static str),
    #[error("crs mismatch: expected `{expected}`, got `{got}`")]
    CrsMismatch { expected: String, got: String },
    #[error("slope requires square pixels, got {x} x {y}")]
    NonSquarePixels { x: f64, y: f64 },
    #[error("raster too small: {0}")]
    TooSmall(&'static str),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("empty {0} split")]
    EmptySplit(&'static str),
    #[error("mask contains values other than 0 and 1")]
    NonBinaryMask,
    #[error("need at least {need} dates, got {got}")]
    TooFewDates { need: usize, got: usize },
    #[error("need at least 3 aligned pairs, got {0}")]
    TooFewPairs(usize),
    #[error("undefined metric: {0}")]
    UndefinedMetric(&'static str),
    #[error("dates must be strictly increasing")]
    DatesNotIncreasing,
}

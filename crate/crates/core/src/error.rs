use thiserror::Error;

/// Errors produced by the core types and codecs.
#[derive(Debug, Error)]
pub enum CoreError {
    #[error("invalid raster: {0}")]
    InvalidRaster(String),

    #[error("probability {value} at index {index} is outside [0, 1]")]
    ProbOutOfRange { index: usize, value: f32 },

    #[error(
        "rle run {index} out of range: start {start} + length {length} - 1 = {end} \
         exceeds {width}x{height} = {pixels}"
    )]
    RleOutOfRange {
        index: usize,
        start: u64,
        length: u64,
        end: u64,
        width: usize,
        height: usize,
        pixels: u64,
    },

    #[error("invalid rle: {0}")]
    InvalidRle(String),

    #[error("rle parse error: {0}")]
    RleParse(String),

    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: String, found: String },

    #[error("truncated payload: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },

    #[error("trailing bytes after payload")]
    TrailingBytes,

    #[error("unknown organ {0:?}")]
    UnknownOrgan(String),

    #[error("unknown source {0:?}")]
    UnknownSource(String),

    #[error("invalid metadata: {0}")]
    InvalidMeta(String),

    #[error("mask png must be 8-bit single-channel with values in {{0, 255}}: {0}")]
    InvalidMaskPng(String),

    #[error("unsupported image layout: {0}")]
    UnsupportedImage(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("image codec: {0}")]
    Image(#[from] image::ImageError),
}

pub type Result<T> = std::result::Result<T, CoreError>;

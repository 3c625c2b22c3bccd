//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("index out of grid: voxel ({0}, {1}, {2}) for dims ({3}, {4}, {5})")]
    IndexOutOfGrid(usize, usize, usize, usize, usize, usize),
    #[error("linear index {index} out of range for {count} voxels")]
    LinearIndexOutOfRange { index: usize, count: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("grid spec mismatch: {0}")]
    SpecMismatch(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("invalid rigid transform: {0}")]
    InvalidTransform(String),
    #[error("insufficient points: {0}")]
    InsufficientPoints(String),
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),
    #[error("degenerate height: ceiling estimate {0} is not positive")]
    DegenerateHeight(f64),
    #[error("empty cloud")]
    EmptyCloud,
    #[error("no matched pairs: every superpixel/supervoxel pair has an invalid side")]
    NoMatchedPairs,
    #[error("non-finite input: {0}")]
    NonFiniteInput(String),
    #[error("no semantic class present in prediction or ground truth")]
    NoPresentClass,
    #[error("invalid class code {0}")]
    InvalidClassCode(u8),

    // file format errors
    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },
    #[error("unsupported format version {0}")]
    VersionMismatch(u32),
    #[error("unknown dtype code {0}")]
    UnknownDtype(u32),
    #[error("payload length mismatch: expected {expected} bytes, found {found}")]
    LengthMismatch { expected: u64, found: u64 },
    #[error("truncated file: needed {needed} more bytes")]
    Truncated { needed: usize },
    #[error("malformed manifest at line {line}: {message}")]
    ManifestParse { line: usize, message: String },
    #[error("unresolvable path: {0}")]
    UnresolvablePath(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

use std::path::{Path, PathBuf};

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// All failure modes of the toolkit.
///
/// Geometry construction distinguishes `GeometryUnavailable` (the inputs do
/// not support the construction, e.g. an invisible keypoint) from
/// `GenerationFailed` (the construction was attempted but ran off the mask).
/// Callers that build evaluation grids treat both as "skip this query".
#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {msg}")]
    Parse { path: PathBuf, line: u64, msg: String },
    #[error("schema error in {path}: {msg}")]
    Schema { path: PathBuf, msg: String },
    #[error("duplicate image id `{0}`")]
    DuplicateImage(String),
    #[error("mask format error: {0}")]
    MaskFormat(String),
    #[error("point ({x}, {y}) outside raster {width}x{height}")]
    OutOfBounds {
        x: f64,
        y: f64,
        width: u32,
        height: u32,
    },
    #[error("split error: {0}")]
    Split(String),
    #[error("geometry unavailable: {0}")]
    GeometryUnavailable(String),
    #[error("generation failed: {0}")]
    GenerationFailed(String),
    #[error("encode error: {0}")]
    Encode(String),
    #[error("decode error: {0}")]
    Decode(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("shape error: {0}")]
    Shape(String),
    #[error("invalid geometry: {0}")]
    Geometry(String),
    #[error("usage error: {0}")]
    Usage(String),
}

impl Error {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        Error::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub(crate) fn parse(path: &Path, line: u64, msg: impl Into<String>) -> Self {
        Error::Parse {
            path: path.to_path_buf(),
            line,
            msg: msg.into(),
        }
    }

    pub(crate) fn schema(path: &Path, msg: impl Into<String>) -> Self {
        Error::Schema {
            path: path.to_path_buf(),
            msg: msg.into(),
        }
    }

    /// True for the two per-query geometry failures that evaluation and
    /// rendering skip instead of aborting.
    pub fn is_skippable(&self) -> bool {
        matches!(
            self,
            Error::GeometryUnavailable(_) | Error::GenerationFailed(_)
        )
    }
}

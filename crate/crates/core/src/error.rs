use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {operand}: expected {expected}, found {found}")]
    DimensionMismatch {
        operand: &'static str,
        expected: String,
        found: String,
    },

    #[error("{0} contains non-finite values")]
    NonFinite(&'static str),

    #[error("{name} must be finite and nonnegative, got {value}")]
    NegativeWeight { name: &'static str, value: f64 },

    #[error("invalid group partition: {0}")]
    InvalidPartition(String),

    #[error("dictionary column {0} has zero norm and cannot be normalized")]
    ZeroAtom(usize),

    #[error("dictionary column {column} is not unit norm (norm {norm})")]
    NotNormalized { column: usize, norm: f64 },

    #[error("duplicate class label {0:?}")]
    DuplicateLabel(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("signal too short: {len} samples, need at least {needed}")]
    SignalTooShort { len: usize, needed: usize },

    #[error("image {height}x{width} is smaller than patch size {patch}")]
    ImageTooSmall {
        height: usize,
        width: usize,
        patch: usize,
    },

    #[error("patch position ({row}, {col}) out of bounds for {height}x{width} image")]
    OutOfBounds {
        row: usize,
        col: usize,
        height: usize,
        width: usize,
    },

    #[error("malformed dictionary file: {0}")]
    Format(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("wav error on {path}: {source}")]
    Wav {
        path: PathBuf,
        #[source]
        source: hound::Error,
    },

    #[error("image error on {path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
}

impl Error {
    pub(crate) fn mismatch(
        operand: &'static str,
        expected: impl ToString,
        found: impl ToString,
    ) -> Self {
        Error::DimensionMismatch {
            operand,
            expected: expected.to_string(),
            found: found.to_string(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub(crate) fn check_weight(name: &'static str, value: f64) -> Result<()> {
    if !(value >= 0.0) || !value.is_finite() {
        return Err(Error::NegativeWeight { name, value });
    }
    Ok(())
}

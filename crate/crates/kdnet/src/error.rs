//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{op}: shape mismatch between {left_name} ({left_rows}x{left_cols}) and {right_name} ({right_rows}x{right_cols})")]
    ShapeMismatch {
        op: &'static str,
        left_name: &'static str,
        left_rows: usize,
        left_cols: usize,
        right_name: &'static str,
        right_rows: usize,
        right_cols: usize,
    },

    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },

    #[error("batch normalization requires a batch of at least 2 in train mode, got {0}")]
    BatchTooSmall(usize),

    #[error("non-finite gradient in parameter `{0}`")]
    NonFiniteGrad(String),

    #[error("non-finite loss at epoch {epoch}, batch {batch}: {details}")]
    NonFiniteLoss {
        epoch: usize,
        batch: usize,
        details: String,
    },

    #[error("point cloud is empty")]
    EmptyCloud,

    #[error("{what} must be a power of two, got {got}")]
    NotPowerOfTwo { what: &'static str, got: usize },

    #[error("mesh has no face with positive area")]
    DegenerateMesh,

    #[error("image has no non-zero pixels")]
    BlankImage,

    #[error("parse error at byte {offset}: {msg}")]
    Parse { offset: u64, msg: String },

    #[error("malformed {format} data at byte {offset}: {msg}")]
    Format {
        format: &'static str,
        offset: usize,
        msg: String,
    },

    #[error("incompatible {what}: expected {expected}, got {got}")]
    Incompatible {
        what: &'static str,
        expected: String,
        got: String,
    },

    #[error("{0}")]
    Invalid(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }
}

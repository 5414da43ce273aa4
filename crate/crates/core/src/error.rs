use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum FpError {
    #[error("dimension mismatch: expected {expected:?}, got {actual:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        actual: (usize, usize),
    },

    #[error("window {rows}x{cols} centered at ({center_row}, {center_col}) exits a {grid_rows}x{grid_cols} grid")]
    WindowOutOfBounds {
        center_row: i64,
        center_col: i64,
        rows: usize,
        cols: usize,
        grid_rows: usize,
        grid_cols: usize,
    },

    #[error("Zernike mode count must be at least 1, got {0}")]
    InvalidModeCount(usize),

    #[error("pupil is identically zero")]
    DegeneratePupil,

    #[error("updated exit wave is identically zero")]
    DegenerateField,

    #[error("reference field is identically zero")]
    DegenerateReference,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("non-finite value encountered in {0}")]
    NonFinite(String),

    #[error("format error in {}: {message}", path.display())]
    Format { path: PathBuf, message: String },

    #[error("manifest error: {0}")]
    Manifest(String),

    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl FpError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        FpError::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            FpError::Format { .. } | FpError::Manifest(_) => 2,
            FpError::NonFinite(_) => 3,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, FpError>;

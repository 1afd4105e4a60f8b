use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the fitting pipeline and its file formats.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid rig: {0}")]
    InvalidRig(String),

    #[error("invalid camera: {0}")]
    InvalidCamera(String),

    #[error("degenerate geometry: {0}")]
    Degenerate(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("no observed frames in window starting at frame {0}")]
    NoObservedFrames(usize),

    #[error("optimization diverged in stage {stage} at iteration {iter}")]
    NonConvergence { stage: String, iter: usize },

    #[error("{file}: record {record}: field `{field}`: {message}")]
    Parse {
        file: PathBuf,
        record: String,
        field: String,
        message: String,
    },

    #[error("{file}: schema `{format}` version {found} is not supported (expected {expected})")]
    SchemaVersion {
        file: PathBuf,
        format: String,
        found: u32,
        expected: u32,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: image: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn dim(what: &'static str, expected: usize, got: usize) -> Self {
        Error::Dimension {
            what,
            expected,
            got,
        }
    }
}

use thiserror::Error;

use crate::topology::Violation;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{what}: expected {expected} entries, found {found}")]
    SizeMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("unknown channel layout {0:?}")]
    UnknownLayout(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("invalid topology: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    InvalidTopology(Vec<Violation>),

    #[error("topology is not a single rooted tree: {0}")]
    NotATree(String),

    #[error("degenerate 6D rotation: {0}")]
    DegenerateRotation(&'static str),

    #[error("matrix is not a proper rotation (orthonormality error {0:.3e})")]
    NotARotation(f64),

    #[error("joint {joint} is not in front of the camera (Z = {z})")]
    BehindCamera { joint: usize, z: f64 },

    #[error("diverged at step {step}: {reason}")]
    Diverged { step: usize, reason: String },

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("could not frame sample {index} inside the image")]
    Framing { index: usize },

    #[error("malformed SKIM data: {0}")]
    Skim(String),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("{context}: {source}")]
    Json {
        context: String,
        #[source]
        source: serde_json::Error,
    },

    #[error("image encoding failed: {0}")]
    Image(#[from] image::ImageError),
}

impl Error {
    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    pub(crate) fn json(context: impl Into<String>, source: serde_json::Error) -> Self {
        Error::Json {
            context: context.into(),
            source,
        }
    }
}

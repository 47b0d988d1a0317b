use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<V, E = Error> = std::result::Result<V, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid gripper: {0}")]
    InvalidGripper(String),

    #[error("invalid planner config: {0}")]
    InvalidConfig(String),

    #[error("invalid direction vector: {0}")]
    InvalidVector(String),

    #[error("invalid camera intrinsics: {0}")]
    InvalidIntrinsics(String),

    /// A file parsed but one of its fields is unusable.
    #[error("{}: field `{field}`: {reason}", path.display())]
    Format {
        path: PathBuf,
        field: String,
        reason: String,
    },

    #[error("{}: shape {found:?} does not match {expected:?}", path.display())]
    ShapeMismatch {
        path: PathBuf,
        expected: Vec<usize>,
        found: Vec<usize>,
    },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("scene has no affordance-positive pixels")]
    EmptyScene,

    #[error("instance too large for brute-force enumeration: {0}")]
    TooLarge(String),

    #[error("invalid scene spec: {0}")]
    SceneSpec(String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn format(path: impl Into<PathBuf>, field: &str, reason: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            field: field.to_owned(),
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

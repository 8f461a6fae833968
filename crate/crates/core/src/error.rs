use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate quaternion")]
    DegenerateQuaternion,

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("image {width}x{height} is smaller than the {window}x{window} SSIM window")]
    ImageTooSmall { width: usize, height: usize, window: usize },

    #[error("unknown distractor view {0}")]
    UnknownView(usize),

    #[error("non-finite gradient in parameter group `{group}` at element {index}")]
    NonFiniteGradient { group: String, index: usize },

    #[error("non-finite loss at step {step} (view {view}): {detail}")]
    NonFiniteLoss { step: usize, view: usize, detail: String },

    #[error("appearance modelling is disabled for this model")]
    AppearanceDisabled,

    #[error("missing clean ground-truth image for frame `{0}`")]
    MissingCleanImage(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("missing manifest: {0}")]
    MissingManifest(PathBuf),

    #[error("malformed manifest {path}: {detail}")]
    MalformedManifest { path: PathBuf, detail: String },

    #[error("malformed camera matrix for frame `{frame}`: {detail}")]
    MalformedMatrix { frame: String, detail: String },

    #[error("unreadable image {path}: {detail}")]
    UnreadableImage { path: PathBuf, detail: String },

    #[error("malformed PLY file {path}: {detail}")]
    MalformedPly { path: PathBuf, detail: String },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::ShapeMismatch(msg.into())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

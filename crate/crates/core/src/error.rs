use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("invalid scene {id}: {reason}")]
    InvalidScene { id: String, reason: String },

    #[error("invalid episode {id}: {reason}")]
    InvalidEpisode { id: String, reason: String },

    #[error("point ({x:.3}, {y:.3}) is outside the scene bounds")]
    OutOfBounds { x: f64, y: f64 },

    #[error("unknown sound category {0}")]
    UnknownCategory(u32),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("episode already terminated")]
    EpisodeDone,

    #[error("sampling exhausted after {attempts} attempts: {what}")]
    SamplingExhausted { what: String, attempts: usize },

    #[error("{path}:{line}: {reason}")]
    Dataset {
        path: PathBuf,
        line: usize,
        reason: String,
    },

    #[error("split overlap: {0}")]
    SplitOverlap(String),

    #[error("config: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("wav: {0}")]
    Wav(#[from] hound::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short stable tag used in machine-readable CLI failure lines.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Precondition(_) => "precondition",
            Error::InvalidScene { .. } => "invalid-scene",
            Error::InvalidEpisode { .. } => "invalid-episode",
            Error::OutOfBounds { .. } => "out-of-bounds",
            Error::UnknownCategory(_) => "unknown-category",
            Error::Shape(_) => "shape",
            Error::EpisodeDone => "episode-done",
            Error::SamplingExhausted { .. } => "sampling-exhausted",
            Error::Dataset { .. } => "dataset",
            Error::SplitOverlap(_) => "split-overlap",
            Error::Config(_) => "config",
            Error::Io { .. } => "io",
            Error::Json(_) => "json",
            Error::Wav(_) => "wav",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

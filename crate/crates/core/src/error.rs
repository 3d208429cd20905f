use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid config: {0}")]
    Config(String),

    #[error("schedule file {path}: {reason}")]
    Schedule { path: PathBuf, reason: String },

    #[error("{what} out of range: {value} (limit {limit})")]
    OutOfRange {
        what: &'static str,
        value: usize,
        limit: usize,
    },

    #[error("invalid value for {what}: {value}")]
    InvalidValue { what: &'static str, value: f64 },

    #[error("shape mismatch in {context}: expected {expected}, got {got}")]
    Shape {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("forward cache does not belong to the current parameters")]
    StaleCache,

    #[error("replay buffer holds {len} transitions, batch of {batch} requested")]
    Underfull { len: usize, batch: usize },

    #[error("episode is finished; call reset first")]
    EpisodeDone,

    #[error("world mismatch: {0} vs {1}")]
    WorldMismatch(String, String),

    #[error("missing checkpoint for the learned policy")]
    MissingCheckpoint,

    #[error("no data to emit: {0}")]
    Empty(&'static str),

    #[error("unsupported checkpoint format version {0}")]
    CheckpointVersion(u32),

    #[error("i/o error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Toml(#[from] toml::de::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

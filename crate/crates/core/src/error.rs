use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by episode transitions. The wire service maps these onto
/// HTTP status codes, so the variants stay fine-grained.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EpisodeError {
    #[error("episode already finished")]
    Finished,
    #[error("a detection was already recorded for this episode")]
    DuplicateDetection,
    #[error("navigation already finished; only a detection or a final stop is accepted")]
    NavigationFinished,
    #[error("viewpoint `{0}` is not navigable from the current location")]
    IllegalMove(String),
    #[error("invalid detection: {0}")]
    InvalidDetection(String),
    #[error("step budget of {0} moves exhausted")]
    StepBudget(usize),
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("validation failed: {0}")]
    Validation(String),
    #[error("unknown viewpoint `{0}`")]
    UnknownViewpoint(String),
    #[error("unknown object `{0}`")]
    UnknownObject(String),
    #[error("unknown task `{0}`")]
    UnknownTask(String),
    #[error("no path from `{from}` to `{to}`")]
    Unreachable { from: String, to: String },
    #[error("world generation failed: {0}")]
    Generation(String),
    #[error("task `{task}`: {source}")]
    Episode {
        task: String,
        #[source]
        source: EpisodeError,
    },
    #[error("agent did not finish task `{0}` within the action budget")]
    AgentStalled(String),
    #[error("no results to aggregate (N=0)")]
    EmptyResults,
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite loss at epoch {epoch}: {value}")]
    NonFinite { epoch: usize, value: f64 },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

use std::path::PathBuf;

use thiserror::Error;

use crate::lp::LpStatus;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed instance: {0}")]
    MalformedInstance(String),

    #[error("instance failed validation: {0}")]
    InvalidInstance(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("state {0} is terminal and has no actions")]
    TerminalState(usize),

    #[error("simplex stalled after {0} pivots")]
    SolverStall(usize),

    #[error("cannot extract an occupancy measure from a {0:?} LP solution")]
    Extraction(LpStatus),

    #[error("extracted occupancy has layer {layer} summing to {sum}")]
    ExtractionLayerSum { layer: usize, sum: f64 },

    #[error("offline program is infeasible; the instance admits no persuasive policy")]
    OfflineInfeasible,

    #[error("growth fit undefined: {0}")]
    UndefinedFit(String),

    #[error("episode {t} outside 1..={horizon}")]
    EpisodeOutOfRange { t: usize, horizon: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

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

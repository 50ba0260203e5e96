use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid panel: {0}")]
    InvalidPanel(String),

    #[error("dynamics diverged at t={t}: {detail}")]
    Divergence { t: usize, detail: String },

    #[error("regression is singular: {0}")]
    SingularFit(String),

    #[error("treatment effect is not identifiable: pi1 == pi2 == {0}")]
    NonIdentifiable(f64),

    #[error("equilibrium bias has a pole at xi = 1")]
    Pole,

    #[error("queue became unstable: {0}")]
    Unstable(String),

    #[error("resampling failed: {0}")]
    Inference(String),

    #[error("edge list {path}: line {line}: {detail}")]
    EdgeListParse {
        path: PathBuf,
        line: usize,
        detail: String,
    },

    #[error("unknown figure id `{0}`")]
    UnknownFigure(String),

    #[error("no successful replications to aggregate")]
    EmptyAggregate,

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}

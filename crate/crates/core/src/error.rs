use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {found}")]
    Dimension { expected: String, found: String },

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("coherence is undefined for the zero matrix")]
    UndefinedCoherence,

    #[error("solver diverged at inner iteration {iteration}")]
    Divergence { iteration: usize },

    #[error("normal equations are singular; use a positive ridge")]
    RankDeficient,

    #[error("labels must contain both classes")]
    DegenerateLabels,

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("could not draw a two-class split after {0} attempts")]
    Stratification(usize),

    #[error("replicate {replicate}, round {round}: {source}")]
    Experiment {
        replicate: usize,
        round: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: line {line}, column {column}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },

    #[error("invalid config: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn shape(expected: (usize, usize), found: (usize, usize)) -> Self {
        Error::Dimension {
            expected: format!("{}x{}", expected.0, expected.1),
            found: format!("{}x{}", found.0, found.1),
        }
    }

    pub(crate) fn len(expected: usize, found: usize) -> Self {
        Error::Dimension {
            expected: format!("length {expected}"),
            found: format!("length {found}"),
        }
    }
}

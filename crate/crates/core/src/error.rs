use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: line {line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("{path}: missing column `{column}`")]
    MissingColumn { path: PathBuf, column: String },

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("s = {s} outside [0, {length}] on an open track")]
    Domain { s: f64, length: f64 },

    #[error("projection failed: {0}")]
    Projection(String),

    #[error("configuration error: {0}")]
    Config(String),

    /// The vehicle sits beyond the local centre of curvature (1 - n*rho <= 0).
    #[error("curvilinear singularity: 1 - n*rho = {0}")]
    Singularity(f64),

    #[error("non-finite derivative at state {0:?}")]
    Integration(Vec<f64>),

    #[error("non-finite linearization entry")]
    Linearization,

    #[error("QP solver failed: {0}")]
    Qp(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad inputs or configuration rather than
    /// by the computation itself.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::Parse { .. }
                | Error::MissingColumn { .. }
                | Error::Config(_)
                | Error::Io { .. }
                | Error::Csv(_)
                | Error::Json(_)
                | Error::Validation(_)
        )
    }
}

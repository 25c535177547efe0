use thiserror::Error;

use crate::mdp::ValidationReport;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid MDP: {0}")]
    InvalidSpec(ValidationReport),

    #[error(
        "representation does not factor this MDP: worst residual {residual:.3e} at \
         (h={h}, s={s}, a={a}, s'={next})"
    )]
    Factorization {
        h: usize,
        s: usize,
        a: usize,
        next: usize,
        residual: f64,
    },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("action {action} out of range at step {h}, state {s}")]
    ActionOutOfRange { h: usize, s: usize, action: usize },

    #[error("constants have not been computed for this representation class")]
    MissingConstants,

    #[error("generator gave up after {0} attempts")]
    GeneratorExhausted(usize),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}

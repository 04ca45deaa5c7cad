use thiserror::Error;

/// Errors produced anywhere in the solver toolkit.
#[derive(Debug, Error)]
pub enum SdbliError {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("semismooth Newton did not converge in {iters} iterations (last residual {residual:.3e})")]
    IterationLimit { iters: usize, residual: f64 },

    #[error("fixed-point oracle exceeded its iteration budget ({0} iterations)")]
    OracleFailure(usize),

    #[error("configuration error in `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("degenerate training set: every singular value of the input matrix was truncated")]
    DegenerateTraining,

    #[error("constant estimation failed: {0}")]
    Estimation(String),

    #[error("contract violated: {0}")]
    Contract(String),

    #[error("solver failure at iteration {k}: {source}")]
    Step {
        k: usize,
        #[source]
        source: Box<SdbliError>,
    },

    #[error("replication with seed stream {stream} failed: {source}")]
    Replication {
        stream: u64,
        #[source]
        source: Box<SdbliError>,
    },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl SdbliError {
    pub fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        SdbliError::Config {
            field: field.into(),
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, SdbliError>;

use thiserror::Error;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {lhs:?} vs {rhs:?}")]
    Dimension {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("ingestion error in {file}{}: {msg}", line.map(|l| format!(" line {l}")).unwrap_or_default())]
    Ingestion {
        file: String,
        line: Option<usize>,
        msg: String,
    },

    #[error("config error at key `{key}`: {msg}")]
    Config { key: String, msg: String },

    #[error("stratification error: {0}")]
    Stratification(String),

    #[error("training diverged: {0}")]
    Divergence(String),

    #[error("incompatible artifact: {0}")]
    Compatibility(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn dim(op: &'static str, lhs: &[usize], rhs: &[usize]) -> Self {
        Error::Dimension {
            op,
            lhs: lhs.to_vec(),
            rhs: rhs.to_vec(),
        }
    }

    pub(crate) fn ingest(file: impl Into<String>, line: Option<usize>, msg: impl Into<String>) -> Self {
        Error::Ingestion {
            file: file.into(),
            line,
            msg: msg.into(),
        }
    }
}

use std::path::PathBuf;

/// Errors produced by the simulator and the estimators.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid phase plan: {0}")]
    InvalidPlan(String),

    #[error("invalid scene: {0}")]
    InvalidScene(String),

    #[error("invalid suppression dimension K = {k} for M = {m} (need K < M)")]
    InvalidK { k: usize, m: usize },

    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: String,
        got: String,
    },

    #[error("degenerate dynamic range: backscatter component is numerically zero")]
    DegenerateDenominator,

    #[error("config error at `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("I/O error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("CSV error on {}: {source}", path.display())]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("thread pool: {0}")]
    ThreadPool(String),
}

impl Error {
    pub(crate) fn dims(
        context: &'static str,
        expected: (usize, usize),
        got: (usize, usize),
    ) -> Self {
        Error::DimensionMismatch {
            context,
            expected: format!("{}x{}", expected.0, expected.1),
            got: format!("{}x{}", got.0, got.1),
        }
    }

    /// True for errors caused by the user's configuration rather than a
    /// failure during the run.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config { .. })
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

use thiserror::Error;

/// Errors produced by the inference engines, diagnostics and I/O layers.
#[derive(Debug, Error)]
pub enum Error {
    /// A matrix that must be symmetric positive definite failed its Cholesky
    /// factorization. `minor` is the 1-based order of the first leading minor
    /// that was not positive.
    #[error("{what} is not positive definite (leading minor {minor} failed){}", context_suffix(.context))]
    NotPositiveDefinite {
        what: String,
        minor: usize,
        context: Option<String>,
    },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: String, reason: String },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("design matrix is rank deficient (rank {rank} < {p} columns)")]
    RankDeficient { rank: usize, p: usize },

    #[error("ELBO decreased at iteration {iter}: {previous} -> {current}")]
    ElboDecrease {
        iter: usize,
        previous: f64,
        current: f64,
    },

    #[error("data error: {0}")]
    Data(String),

    #[error("csv error at row {row}, column `{column}`: {message}")]
    Cell {
        row: usize,
        column: String,
        message: String,
    },

    #[error("unsupported file version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn context_suffix(context: &Option<String>) -> String {
    match context {
        Some(c) => format!(" [{c}]"),
        None => String::new(),
    }
}

impl Error {
    pub(crate) fn invalid(name: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name: name.into(),
            reason: reason.into(),
        }
    }

    /// Attach a location (parameter name, iteration) to an SPD failure.
    pub fn with_context(self, ctx: impl Into<String>) -> Self {
        match self {
            Error::NotPositiveDefinite { what, minor, .. } => Error::NotPositiveDefinite {
                what,
                minor,
                context: Some(ctx.into()),
            },
            other => other,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

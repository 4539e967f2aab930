use thiserror::Error;

/// Errors raised anywhere in the estimation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("schema mismatch: {0}")]
    Schema(String),

    #[error("length mismatch: expected {expected}, got {actual} ({what})")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("pandemic covariates missing for {}", format_missing(.0))]
    MissingCovariates(Vec<(String, i32, u32)>),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("model cannot be fit: {0}")]
    Unfit(String),

    #[error("unsupported operation: {0}")]
    Unsupported(String),

    #[error("unknown feature `{0}`")]
    UnknownFeature(String),
}

fn format_missing(missing: &[(String, i32, u32)]) -> String {
    let shown: Vec<String> = missing
        .iter()
        .take(20)
        .map(|(d, y, m)| format!("{d}@{y}-{m:02}"))
        .collect();
    if missing.len() > shown.len() {
        format!("{} (+{} more)", shown.join(", "), missing.len() - shown.len())
    } else {
        shown.join(", ")
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

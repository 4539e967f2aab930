use std::fmt;

/// Failures with a dedicated exit code.
#[derive(Debug)]
pub enum Failure {
    /// An upstream stage has not produced its artifacts.
    MissingStage { stage: &'static str, needed_by: &'static str },
    Config(String),
    /// Input or artifact content that fails validation.
    Data(String),
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::MissingStage { .. } => 2,
            Failure::Config(_) => 3,
            Failure::Data(_) => 4,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::MissingStage { stage, needed_by } => {
                write!(f, "`{needed_by}` needs the artifacts of `{stage}`; run `exportshock {stage}` first")
            }
            Failure::Config(msg) => write!(f, "configuration error: {msg}"),
            Failure::Data(msg) => write!(f, "data validation failed: {msg}"),
        }
    }
}

impl std::error::Error for Failure {}

/// Exit code for any error reaching `main`.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(f) = cause.downcast_ref::<Failure>() {
            return f.exit_code();
        }
        if let Some(e) = cause.downcast_ref::<exportshock::Error>() {
            use exportshock::Error::*;
            return match e {
                Config(_) => 3,
                InvalidInput(_) | Schema(_) | LengthMismatch { .. } | MissingCovariates(_) | Csv(_) | Json(_)
                | UnknownFeature(_) => 4,
                Io(_) | Unfit(_) | Unsupported(_) => 1,
            };
        }
    }
    1
}

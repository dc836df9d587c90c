use thiserror::Error;

/// Errors surfaced by the learner, the environment and the experiment harness.
#[derive(Debug, Error)]
pub enum SivError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("invalid experiment spec: {}", .0.join("; "))]
    InvalidSpec(Vec<String>),

    #[error("environment contract violation: {0}")]
    Contract(String),

    #[error("numeric fault: {0}")]
    Numeric(String),

    #[error("end of gesture stream at t = {0} ms")]
    EndOfStream(u64),

    #[error("replay mismatch: {0}")]
    ReplayMismatch(String),

    #[error("malformed log line {line}: {reason}")]
    Log { line: usize, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl SivError {
    /// True for errors caused by bad user-provided configuration.
    pub fn is_config(&self) -> bool {
        matches!(self, SivError::Config(_) | SivError::InvalidSpec(_))
    }
}

pub type Result<T> = std::result::Result<T, SivError>;

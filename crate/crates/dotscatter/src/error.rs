use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] dotscatter_core::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{failed} of {total} rows failed (threshold {threshold})")]
    TooManyFailures { failed: usize, total: usize, threshold: f64 },
}

impl CliError {
    /// 1 for configuration and file problems, 2 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Io(_) | CliError::Csv(_) | CliError::Json(_) => 1,
            CliError::Core(e) if matches!(e, dotscatter_core::Error::InvalidParameter { .. } | dotscatter_core::Error::Geometry(_)) => 1,
            CliError::Core(_) | CliError::TooManyFailures { .. } => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

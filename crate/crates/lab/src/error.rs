use thiserror::Error;

#[derive(Debug, Error)]
pub enum LabError {
    #[error(transparent)]
    Core(#[from] anisocanon::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("config line {line}: {message}")]
    Config { line: usize, message: String },
    #[error("{folds} folds requested for {samples} samples")]
    BadFoldCount { folds: usize, samples: usize },
    #[error("invalid data: {0}")]
    Data(String),
}

pub type LabResult<T> = Result<T, LabError>;

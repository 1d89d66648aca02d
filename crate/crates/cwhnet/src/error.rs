use cwhnet_core::Error as CoreError;

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const FAILURE: i32 = 1;
    pub const INVALID_INPUT: i32 = 2;
    pub const NO_PATH: i32 = 3;
    pub const INFEASIBLE_START: i32 = 4;
    pub const PARTIAL_ARRIVAL: i32 = 5;
    pub const STALE_PLAN: i32 = 6;
    pub const VERIFY_FAILED: i32 = 7;
}

#[derive(Debug, thiserror::Error)]
pub enum AppError {
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("io error: {0}")]
    Io(String),
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error("no path: {0}")]
    NoPath(String),
    #[error("plan file is stale: {0}")]
    Stale(String),
    #[error("{arrived} of {runs} runs reached the goal within {steps} steps")]
    PartialArrival { arrived: usize, runs: usize, steps: usize },
    #[error("verification failed: {0}")]
    VerifyFailed(String),
}

impl AppError {
    pub fn exit_code(&self) -> i32 {
        match self {
            AppError::Invalid(_) => exit::INVALID_INPUT,
            AppError::Core(CoreError::NoPath { .. }) | AppError::NoPath(_) => exit::NO_PATH,
            AppError::Core(CoreError::Start(_)) => exit::INFEASIBLE_START,
            AppError::PartialArrival { .. } => exit::PARTIAL_ARRIVAL,
            AppError::Stale(_) => exit::STALE_PLAN,
            AppError::VerifyFailed(_) => exit::VERIFY_FAILED,
            AppError::Io(_) | AppError::Core(_) => exit::FAILURE,
        }
    }
}

impl From<std::io::Error> for AppError {
    fn from(e: std::io::Error) -> Self {
        AppError::Io(e.to_string())
    }
}

impl From<serde_json::Error> for AppError {
    fn from(e: serde_json::Error) -> Self {
        AppError::Io(e.to_string())
    }
}

impl From<csv::Error> for AppError {
    fn from(e: csv::Error) -> Self {
        AppError::Io(e.to_string())
    }
}

pub type AppResult<T> = Result<T, AppError>;

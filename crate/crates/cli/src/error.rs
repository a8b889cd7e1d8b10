use fase::FaseError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numeric(_) => 4,
        }
    }

    pub fn data(context: impl std::fmt::Display, err: impl std::fmt::Display) -> Self {
        CliError::Data(format!("{context}: {err}"))
    }
}

impl From<FaseError> for CliError {
    fn from(e: FaseError) -> Self {
        let msg = e.to_string();
        match e {
            FaseError::Divergence(_) | FaseError::RankDeficientDesign => CliError::Numeric(msg),
            FaseError::InvalidParameter(_)
            | FaseError::InvalidGrid(_)
            | FaseError::InvalidComplexity { .. }
            | FaseError::InfeasibleDensity { .. }
            | FaseError::UnsupportedOrder(_)
            | FaseError::InvalidDimension(_)
            | FaseError::ResourceLimit(_) => CliError::Usage(msg),
            FaseError::DimensionMismatch(_)
            | FaseError::InvalidSeries(_)
            | FaseError::DegenerateDomain(_)
            | FaseError::OutOfDomain { .. } => CliError::Data(msg),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

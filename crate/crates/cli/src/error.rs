use escapepath::bvp::BvpError;
use escapepath::melnikov::CorrectionError;
use escapepath::model::ModelError;
use escapepath::path::PathError;
use escapepath::rate_functional::ActionError;
use escapepath::sde::SdeError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad arguments, configuration or output location.
    #[error("{0}")]
    Usage(String),
    /// Non-hyperbolic equilibria or another unmet precondition.
    #[error("{0}")]
    Precondition(String),
    #[error("{0}")]
    NonConvergence(String),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Usage(_) | Self::Io(_) => 1,
            Self::Precondition(_) => 2,
            Self::NonConvergence(_) => 3,
        }
    }
}

impl From<BvpError> for CliError {
    fn from(e: BvpError) -> Self {
        let msg = e.to_string();
        match e {
            BvpError::NoConnection { .. } | BvpError::ContinuationStuck { .. } | BvpError::NoEquilibrium { .. } => {
                Self::NonConvergence(msg)
            }
            BvpError::Model(ModelError::UnknownModel(_)) | BvpError::Model(ModelError::InvalidArgument(_)) => {
                Self::Usage(msg)
            }
            _ => Self::Precondition(msg),
        }
    }
}

impl From<CorrectionError> for CliError {
    fn from(e: CorrectionError) -> Self {
        match e {
            CorrectionError::Bvp(b) => b.into(),
            other => Self::Precondition(other.to_string()),
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::UnknownModel(_) | ModelError::InvalidArgument(_) => Self::Usage(e.to_string()),
            _ => Self::Precondition(e.to_string()),
        }
    }
}

impl From<SdeError> for CliError {
    fn from(e: SdeError) -> Self {
        match e {
            SdeError::InvalidConfig(_) | SdeError::ThreadPool(_) => Self::Usage(e.to_string()),
            SdeError::Io(io) => Self::Io(io),
            _ => Self::Precondition(e.to_string()),
        }
    }
}

impl From<ActionError> for CliError {
    fn from(e: ActionError) -> Self {
        Self::Precondition(e.to_string())
    }
}

impl From<PathError> for CliError {
    fn from(e: PathError) -> Self {
        Self::Usage(e.to_string())
    }
}

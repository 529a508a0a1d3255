use std::path::PathBuf;

/// Exit status for usage, configuration and input-data errors.
pub const EXIT_USAGE: i32 = 2;
/// Exit status for failures after a run has started.
pub const EXIT_RUNTIME: i32 = 3;

pub type Result<T, E = CliError> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    /// Missing or corrupt input files.
    #[error(transparent)]
    Data(fedround_core::Error),
    #[error("cannot write {path}: {source}")]
    Output {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Core(#[from] fedround_core::Error),
    #[error(transparent)]
    Net(#[from] fedround_net::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config(_) | CliError::Data(_) => EXIT_USAGE,
            CliError::Core(fedround_core::Error::Parameter(_)) => EXIT_USAGE,
            _ => EXIT_RUNTIME,
        }
    }

    /// Federated round in which a runtime failure happened, if any.
    pub fn round(&self) -> Option<u64> {
        match self {
            CliError::Core(e) => e.round(),
            CliError::Net(e) => e.round(),
            _ => None,
        }
    }

    pub(crate) fn output(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Output {
            path: path.into(),
            source,
        }
    }
}

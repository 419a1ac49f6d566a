use thiserror::Error;

/// Failures of a CLI run, each with its process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("solver did not converge: {0}")]
    NonConvergence(geobayes::Error),
    #[error("tube violation: {0}")]
    TubeViolation(String),
    #[error("output refused: {0}")]
    Replay(String),
    #[error("{0}")]
    Library(geobayes::Error),
    #[error("i/o: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) | Self::Replay(_) => 2,
            Self::NonConvergence(_) => 3,
            Self::TubeViolation(_) => 4,
            Self::Library(_) | Self::Io(_) => 1,
        }
    }
}

impl From<geobayes::Error> for CliError {
    fn from(e: geobayes::Error) -> Self {
        use geobayes::Error as E;
        match e {
            E::EigenNonConvergence { .. } | E::ShootingFailed { .. } => Self::NonConvergence(e),
            other => Self::Library(other),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::Io(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        Self::Io(e.to_string())
    }
}

use std::process::ExitCode;

use euler_null::Error as CoreError;

/// Failure of a subcommand, classified by exit code.
#[derive(Debug)]
pub enum CliError {
    /// Bad configuration, unreadable input or inconsistent artifacts (exit 1).
    Config(String),
    /// Non-finite values, blowup guard or a degenerate geometric quantity (exit 2).
    Numerical(String),
    /// A verification check out of tolerance under `--strict` (exit 3).
    Verification(String),
}

pub type CliResult<T> = Result<T, CliError>;

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(match self {
            Self::Config(_) => 1,
            Self::Numerical(_) => 2,
            Self::Verification(_) => 3,
        })
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Config(m) => write!(f, "configuration error: {m}"),
            Self::Numerical(m) => write!(f, "numerical failure: {m}"),
            Self::Verification(m) => write!(f, "verification failed: {m}"),
        }
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::NonHyperbolic { .. }
            | CoreError::BlowupDetected { .. }
            | CoreError::SingularFrame { .. }
            | CoreError::DegenerateGradient { .. }
            | CoreError::MuNonpositive { .. }
            | CoreError::DegenerateTorusFrame { .. }
            | CoreError::CoordinateFold
            | CoreError::RangeError { .. } => Self::Numerical(e.to_string()),
            _ => Self::Config(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::Config(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        Self::Config(e.to_string())
    }
}

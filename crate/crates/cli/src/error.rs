use std::process::ExitCode;

use optomech::Error;

#[derive(Debug)]
pub enum CliError {
    /// Bad or missing input; exit 2.
    Config(String),
    /// Numerical failure; exit 3.
    Numerical(String),
    /// `--check` found values outside their bands; exit 4.
    CheckFailed(usize),
}

pub type CliResult<T> = std::result::Result<T, CliError>;

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::CheckFailed(_) => 4,
        })
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Numerical(m) => write!(f, "numerical failure: {m}"),
            CliError::CheckFailed(n) => write!(f, "{n} check(s) outside their acceptance bands"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::AmbiguousSteadyState { .. }
            | Error::Numerical(_)
            | Error::NotHermitian(_)
            | Error::NotNormal(_)
            | Error::GridTooSmall(_) => CliError::Numerical(e.to_string()),
            Error::Config(m) => CliError::Config(m),
            other => CliError::Config(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Config(e.to_string())
    }
}

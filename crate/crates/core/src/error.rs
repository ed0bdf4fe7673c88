use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    #[error("index out of range: {0}")]
    InvalidIndex(String),

    #[error("operator is not Hermitian (max entrywise deviation {0:.3e})")]
    NotHermitian(f64),

    #[error("generator is not normal (relative commutator norm {0:.3e})")]
    NotNormal(f64),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("ambiguous steady state: smallest |eigenvalue| {smallest:.3e}, next {next:.3e}")]
    AmbiguousSteadyState { smallest: f64, next: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("wigner grid too small: boundary |W| reaches {0:.3e}")]
    GridTooSmall(f64),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Display text without the variant prefix.
    pub fn message(&self) -> String {
        match self {
            Error::Config(m) | Error::InvalidArgument(m) | Error::Numerical(m) => m.clone(),
            other => other.to_string(),
        }
    }
}

/// serde_json message without its trailing " at line L column C".
pub(crate) fn strip_location(e: &serde_json::Error) -> String {
    let text = e.to_string();
    match text.rfind(" at line ") {
        Some(i) if e.line() > 0 => text[..i].to_string(),
        _ => text,
    }
}

use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("degenerate configuration: {0}")]
    DegenerateConfiguration(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid technique: {0}")]
    InvalidTechnique(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("cost family {family} requires auxiliary input `{field}`")]
    MissingAuxiliary { family: &'static str, field: &'static str },

    #[error("solver failure: {message}")]
    SolverFailure { message: String, diagnostic: Option<String> },

    #[error("CFAT diverged at step {step}: position error {error:.4} rad above {threshold:.4} rad")]
    CfatDiverged { step: usize, error: f64, threshold: f64 },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("config error in {origin}: {message}")]
    Config { origin: String, message: String },

    #[error("constraint violated: {0}")]
    Constraint(String),

    #[error("schema mismatch in {path}: missing columns {missing:?}, unexpected columns {unexpected:?}")]
    Schema { path: PathBuf, missing: Vec<String>, unexpected: Vec<String> },

    #[error("malformed data in {path}: {message}")]
    Data { path: PathBuf, message: String },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Short stable identifier used by the command line for machine-readable failures.
    pub fn category(&self) -> &'static str {
        match self {
            Error::DegenerateConfiguration(_) => "degenerate-configuration",
            Error::InvalidModel(_) => "invalid-model",
            Error::InvalidTechnique(_) => "invalid-technique",
            Error::InvalidArgument(_) => "invalid-argument",
            Error::MissingAuxiliary { .. } => "missing-auxiliary",
            Error::SolverFailure { .. } => "solver-failure",
            Error::CfatDiverged { .. } => "cfat-diverged",
            Error::LengthMismatch { .. } => "length-mismatch",
            Error::Config { .. } => "config",
            Error::Constraint(_) => "constraint",
            Error::Schema { .. } => "schema",
            Error::Data { .. } => "data",
            Error::Io { .. } => "io",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn data(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Data { path: path.into(), message: message.into() }
    }
}

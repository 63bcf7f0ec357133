use thiserror::Error;

/// Errors raised by the filter library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not skew-symmetric (symmetric part norm {0:.3e})")]
    NotSkew(f64),

    #[error("matrix is degenerate (smallest singular value {0:.3e})")]
    Degenerate(f64),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("sensor bank is not a full-vector bank: channel {0} has Lambda != I3")]
    NotVectorBank(usize),

    #[error("reference directions are collinear (cross product norm {0:.3e})")]
    CollinearReferences(f64),

    #[error("no root for epsilon = {0} (requires 0 <= epsilon < 1)")]
    NoSolution(f64),

    #[error("configuration mismatch: {0}")]
    ConfigurationMismatch(String),

    #[error("degenerate pitot geometry (|a1 x a2| = {0:.3e})")]
    DegenerateGeometry(f64),

    #[error("invalid sensor bank: {0}")]
    InvalidBank(String),

    #[error("variant `{variant}` is not compatible with scenario `{scenario}`")]
    IncompatibleVariant { variant: String, scenario: String },

    #[error("non-finite state in variant `{variant}` at step {step} (t = {t})")]
    NonFiniteState { variant: String, step: usize, t: f64 },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error(transparent)]
    Config(#[from] crate::config::ConfigError),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

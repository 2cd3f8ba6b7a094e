use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// Mismatched or invalid matrix dimensions.
    #[error("shape error: {0}")]
    Shape(String),
    /// An argument lies outside the domain of the function.
    #[error("domain error: {0}")]
    Domain(String),
    /// A linear-algebra or sampling step broke down (e.g. a non positive-definite matrix).
    #[error("numerical error: {0}")]
    Numerical(String),
    /// Invalid configuration values.
    #[error("configuration error: {0}")]
    Config(String),
    /// The requested prior combination has no implemented path.
    #[error("unsupported: {0}")]
    Unsupported(String),
    /// A constant the caller asked for does not exist for this prior.
    #[error("unavailable: {0}")]
    Unavailable(String),
}

pub type Result<T> = std::result::Result<T, Error>;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("unsupported kernel order {0} (maximum is 8)")]
    UnsupportedOrder(usize),
    #[error("derivative order {k} exceeds kernel order {order}")]
    UnsupportedDerivative { k: usize, order: usize },
    #[error("wrong regime: {0}")]
    WrongRegime(String),
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("construction error: {0}")]
    Construction(String),
    #[error("config error in `{field}`: {msg}")]
    Config { field: String, msg: String },
    #[error("io error: {0}")]
    Io(String),
    #[error("non-finite drift on path {path} at step {step}")]
    NonFiniteDrift { path: usize, step: usize },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}

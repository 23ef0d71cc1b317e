use alloc::string::String;
use core::fmt;

/// Errors raised by the simulation core.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A parameter is outside its admissible range.
    Config(String),
    /// A quantity that must be estimated from a non-degenerate field is degenerate.
    Degenerate(String),
    /// Calibration constants are inconsistent with the bounds they must obey.
    Inconsistent(String),
    /// An argument is outside the domain of a formula.
    Domain(String),
    /// A simulated state became non-finite.
    Numerical { step: u64, message: String },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Config(m) => write!(f, "invalid configuration: {m}"),
            Error::Degenerate(m) => write!(f, "degenerate field: {m}"),
            Error::Inconsistent(m) => write!(f, "calibration inconsistency: {m}"),
            Error::Domain(m) => write!(f, "domain error: {m}"),
            Error::Numerical { step, message } => {
                write!(f, "numerical failure at step {step}: {message}")
            }
        }
    }
}

impl core::error::Error for Error {}

pub type Result<T> = core::result::Result<T, Error>;

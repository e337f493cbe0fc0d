//! Error type shared by every module in the crate.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

/// Crate-wide result alias.
pub type Result<T> = core::result::Result<T, Error>;

/// Errors surfaced by the parametrization and simulation code.
///
/// Variants carry enough context to name the offending shapes or values;
/// callers that need richer context wrap them at the CLI layer.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Tensor or field dimensions do not agree for an operation.
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    /// A structural or numeric configuration is invalid (e.g. a convolution
    /// whose output size is not a positive integer).
    Config(String),
    /// An API contract was violated (non-scalar loss, dt above the CFL
    /// limit, value-range tag mismatch, ...).
    Contract(String),
    /// More items were requested than exist.
    Capacity { requested: usize, available: usize },
    /// An iterative numerical method failed (carries the final residual).
    Numerical(String),
    /// An operation that needs data received none.
    Empty(&'static str),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::ShapeMismatch { op, lhs, rhs } => {
                write!(f, "{op}: shape mismatch between {lhs:?} and {rhs:?}")
            }
            Error::Config(msg) => write!(f, "invalid configuration: {msg}"),
            Error::Contract(msg) => write!(f, "contract violation: {msg}"),
            Error::Capacity {
                requested,
                available,
            } => write!(f, "requested {requested} items but only {available} exist"),
            Error::Numerical(msg) => write!(f, "numerical failure: {msg}"),
            Error::Empty(what) => write!(f, "{what} is empty"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for Error {}

impl Error {
    pub(crate) fn shape(op: &'static str, lhs: &[usize], rhs: &[usize]) -> Self {
        Error::ShapeMismatch {
            op,
            lhs: lhs.to_vec(),
            rhs: rhs.to_vec(),
        }
    }
}

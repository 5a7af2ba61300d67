use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::mdp::Violation;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Array shapes disagree with each other or with the MDP.
    Dimension {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    /// A scalar argument is outside its admissible range.
    InvalidParameter(String),
    /// The MDP breaks one or more of its invariants.
    Validation(Vec<Violation>),
    /// A partition is not a disjoint nonempty cover, or is inconsistent with
    /// the metric it is used with.
    InvalidPartition(String),
    /// A distance matrix is not a 1-bounded semimetric.
    InvalidMetric(String),
    /// An iterative solver hit its iteration cap before its stopping rule fired.
    CapReached { iterations: u64 },
    /// A transport solution failed its own optimality certificate.
    Certification(String),
    /// The bound theorems need `gamma <= c_T` and `c_R > 0`.
    BoundPrecondition(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Dimension {
                what,
                expected,
                found,
            } => write!(
                f,
                "dimension mismatch in {what}: expected {expected}, found {found}"
            ),
            Error::InvalidParameter(msg) => write!(f, "invalid parameter: {msg}"),
            Error::Validation(violations) => {
                write!(f, "{} invariant violation(s)", violations.len())?;
                for v in violations.iter().take(8) {
                    write!(f, "; {v}")?;
                }
                Ok(())
            }
            Error::InvalidPartition(msg) => write!(f, "invalid partition: {msg}"),
            Error::InvalidMetric(msg) => write!(f, "invalid distance matrix: {msg}"),
            Error::CapReached { iterations } => {
                write!(f, "iteration cap reached after {iterations} iterations")
            }
            Error::Certification(msg) => write!(f, "optimality certificate failed: {msg}"),
            Error::BoundPrecondition(msg) => write!(f, "bound precondition violated: {msg}"),
        }
    }
}

impl core::error::Error for Error {}

pub(crate) fn check_len(what: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::Dimension {
            what,
            expected,
            found,
        })
    }
}

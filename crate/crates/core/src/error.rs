//! Error type shared by the core modules.

use alloc::string::String;
use core::fmt;

/// Errors surfaced by sampling, verification, decoding, and index
/// construction. Parameter problems are reported eagerly so callers can
/// reject a configuration before paying for sampling.
#[derive(Debug, Clone, PartialEq)]
pub enum CoreError {
    /// A vector contained NaN or an infinity.
    NonFinite,
    /// Operand dimensions disagree.
    DimMismatch { expected: usize, got: usize },
    /// A dimension that must be a power of two is not.
    NotPowerOfTwo(usize),
    /// A parameter is outside its legal range; the message names it.
    BadParam(String),
    /// The derived success probability is zero (or the offset count
    /// overflows its budget): no filter count can certify this geometry.
    InfeasibleParams(String),
    /// Verification kept failing after the configured number of resamples.
    VerificationFailed {
        attempts: u32,
        /// A witness pair from the last failed attempt, flattened.
        witness: alloc::vec::Vec<f64>,
    },
    /// A decode result exceeded the configured cap; `point` names the
    /// offending stored point when the overflow happened during a build.
    DecodeOverflow { cap: usize, point: Option<usize> },
    /// An enumerated tree collection exceeded the configured cap.
    CollectionOverflow { size: u128, cap: u128 },
    /// `find_splitting` exhausted the candidates at some node.
    SplittingNotFound { level: usize, node: usize },
    /// Numerical routine failed to converge.
    NoConvergence(&'static str),
}

impl fmt::Display for CoreError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CoreError::NonFinite => write!(f, "non-finite coordinate"),
            CoreError::DimMismatch { expected, got } => {
                write!(f, "dimension mismatch: expected {expected}, got {got}")
            }
            CoreError::NotPowerOfTwo(d) => write!(f, "dimension {d} is not a power of two"),
            CoreError::BadParam(m) => write!(f, "bad parameter: {m}"),
            CoreError::InfeasibleParams(m) => write!(f, "infeasible parameters: {m}"),
            CoreError::VerificationFailed { attempts, witness } => write!(
                f,
                "family verification failed after {attempts} attempts (witness pair {witness:?})"
            ),
            CoreError::DecodeOverflow { cap, point } => match point {
                Some(id) => write!(f, "decode of point {id} exceeded cap of {cap} filters"),
                None => write!(f, "decode result exceeded cap of {cap} filters"),
            },
            CoreError::CollectionOverflow { size, cap } => {
                write!(f, "tree collection size {size} exceeds cap {cap}")
            }
            CoreError::SplittingNotFound { level, node } => {
                write!(f, "no acceptable splitter at level {level}, node {node}")
            }
            CoreError::NoConvergence(what) => write!(f, "no convergence in {what}"),
        }
    }
}

impl core::error::Error for CoreError {}

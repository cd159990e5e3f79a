use alloc::string::String;
use core::fmt;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Box with non-positive size or non-finite coordinates.
    InvalidBox { reason: &'static str },
    InvalidScore(f64),
    InvalidEmbedding(&'static str),
    DimensionMismatch { expected: usize, found: usize },
    ShapeMismatch { expected: (usize, usize), found: (usize, usize) },
    /// Re-update requested on a track that has never been observed.
    NoAnchorObservation,
    InvalidGap(u32),
    NonMonotonicFrame { previous: u32, current: u32 },
    EmptyGroundTruth,
    EmptyBatch(&'static str),
    NonFiniteEval(f64),
    InvalidConfig(String),
    InfeasibleScenario(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidBox { reason } => write!(f, "invalid bounding box: {reason}"),
            Error::InvalidScore(s) => write!(f, "score {s} outside [0, 1]"),
            Error::InvalidEmbedding(why) => write!(f, "invalid embedding: {why}"),
            Error::DimensionMismatch { expected, found } => {
                write!(f, "dimension mismatch: expected {expected}, found {found}")
            }
            Error::ShapeMismatch { expected, found } => write!(
                f,
                "matrix shape mismatch: expected {}x{}, found {}x{}",
                expected.0, expected.1, found.0, found.1
            ),
            Error::NoAnchorObservation => f.write_str("no anchor observation"),
            Error::InvalidGap(g) => write!(f, "re-update gap must be >= 1, got {g}"),
            Error::NonMonotonicFrame { previous, current } => write!(
                f,
                "frame {current} does not follow previous frame {previous}"
            ),
            Error::EmptyGroundTruth => f.write_str("ground truth is empty"),
            Error::EmptyBatch(what) => write!(f, "empty batch: {what}"),
            Error::NonFiniteEval(v) => write!(f, "evaluation returned non-finite value {v}"),
            Error::InvalidConfig(msg) => write!(f, "invalid configuration: {msg}"),
            Error::InfeasibleScenario(msg) => write!(f, "infeasible scenario: {msg}"),
        }
    }
}

impl core::error::Error for Error {}

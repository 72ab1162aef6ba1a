use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::reduction::Counterexample;

pub type Result<T, E = Error> = core::result::Result<T, E>;

/// Everything that can go wrong while building or solving an instance.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Sizes, stages or indices do not agree with the instance they are used on.
    InstanceMismatch(String),
    /// Tried to extend a history that already sits at the horizon.
    HorizonExceeded { stage: usize },
    /// Split point past the end of the history.
    InvalidSplit { at: usize, stage: usize },
    /// A feedback was asked for a control at a stage it does not cover.
    FeedbackDomain { stage: usize },
    /// Stage range with `from > to`.
    InvalidRange { from: usize, to: usize },
    /// A dense table or an enumeration would exceed its configured limit.
    Capacity {
        what: &'static str,
        stage: Option<usize>,
        needed: u128,
        limit: u128,
    },
    /// NaN or negative cost.
    InvalidCost(f64),
    /// Probabilities that are negative or do not sum to one.
    Normalization { sum: f64, tolerance: f64 },
    /// A reduction is missing a map or a dynamics for some block.
    IncompleteReduction { block: usize },
    /// The criterion does not factor through the final reduction map.
    Factorization {
        first: Vec<usize>,
        second: Option<Vec<usize>>,
    },
    /// The reduction is not a compatible state reduction.
    Incompatible(Counterexample),
    /// An operation needs a different representation (e.g. additive criterion).
    Representation(&'static str),
    /// Dam parameters that leave the integer volume grid.
    Grid(String),
    /// A `(day, minute)` pair outside the two-scale time set.
    Domain { day: usize, minute: usize },
    /// Noise blocks that were required to be independent are not.
    Independence { day: usize },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InstanceMismatch(msg) => write!(f, "instance mismatch: {msg}"),
            Error::HorizonExceeded { stage } => {
                write!(f, "cannot extend a history at the horizon (stage {stage})")
            }
            Error::InvalidSplit { at, stage } => {
                write!(f, "cannot split a stage-{stage} history at stage {at}")
            }
            Error::FeedbackDomain { stage } => write!(f, "feedback does not cover stage {stage}"),
            Error::InvalidRange { from, to } => write!(f, "invalid stage range {from}..{to}"),
            Error::Capacity {
                what,
                stage,
                needed,
                limit,
            } => {
                write!(f, "capacity exceeded for {what}: {needed} > {limit}")?;
                if let Some(s) = stage {
                    write!(f, " (stage {s})")?;
                }
                Ok(())
            }
            Error::InvalidCost(v) => write!(f, "invalid cost {v}: costs must be >= 0 and not NaN"),
            Error::Normalization { sum, tolerance } => write!(
                f,
                "probabilities sum to {sum}, outside tolerance {tolerance:e} of 1 (or negative entry)"
            ),
            Error::IncompleteReduction { block } => {
                write!(f, "reduction is missing a map or dynamics for block {block}")
            }
            Error::Factorization { first, second } => match second {
                Some(s) => write!(
                    f,
                    "criterion does not factor through the final state: histories {first:?} and {s:?} share a state but differ in cost"
                ),
                None => write!(
                    f,
                    "reduced criterion disagrees with the criterion at history {first:?}"
                ),
            },
            Error::Incompatible(cx) => write!(f, "incompatible reduction: {cx}"),
            Error::Representation(msg) => write!(f, "unsupported representation: {msg}"),
            Error::Grid(msg) => write!(f, "off-grid parameter: {msg}"),
            Error::Domain { day, minute } => {
                write!(f, "({day}, {minute}) is not a point of the two-scale time set")
            }
            Error::Independence { day } => {
                write!(f, "noise of day {day} is not independent of the other days")
            }
        }
    }
}

impl core::error::Error for Error {}

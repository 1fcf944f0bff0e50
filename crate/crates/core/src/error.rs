use thiserror::Error;

use crate::spectral::Partition;

/// Errors raised by the numerical routines and the file formats.
#[derive(Debug, Error)]
pub enum Error {
    #[error("eigengap at position {k} is {gap:e}; projection onto G(k,d) is ill-posed")]
    EigengapTooSmall { k: usize, gap: f64 },

    #[error("random frame stayed rank deficient after {attempts} draws")]
    RankDeficient { attempts: usize },

    #[error("invalid dimensions d={d}, k={k}: {reason}")]
    InvalidDimensions {
        d: usize,
        k: usize,
        reason: &'static str,
    },

    #[error("not a rank-{k} orthogonal projector: {reason}")]
    NotAProjector { k: usize, reason: String },

    #[error("partition {partition} has length {len} > k = {k}")]
    PartitionTooLong {
        partition: Partition,
        len: usize,
        k: usize,
    },

    #[error("basis of degree {available} is too shallow, degree {required} is needed")]
    BasisTooShallow { required: u32, available: u32 },

    #[error("degree bound variant {variant} is not defined for d={d}, k={k}")]
    VariantMismatch {
        variant: &'static str,
        d: usize,
        k: usize,
    },

    #[error("quadrature in {0} variables is not supported (m <= 2)")]
    UnsupportedArity(usize),

    #[error("polynomial degree {degree} exceeds quadrature degree {capacity}")]
    DegreeOverflow { degree: u32, capacity: u32 },

    #[error("normalizer for partition {partition} is {value}, not a positive integer")]
    NormalizationNotIntegral { partition: Partition, value: f64 },

    #[error("quadrature did not converge (last change {last_change:e})")]
    QuadratureNotConverged { last_change: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("target wce {target:e} not reached, best was {achieved:e}")]
    TargetNotReached { achieved: f64, target: f64 },

    #[error("slope fit needs at least 3 usable records, found {found}")]
    TooFewPoints { found: usize },

    #[error("kernel diagonal is not constant")]
    NonConstantDiagonal,

    #[error("design has strength {found}, model needs strength {expected}")]
    StrengthMismatch { expected: u32, found: u32 },

    #[error("no design of strength {t} available")]
    MissingDesign { t: u32 },

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

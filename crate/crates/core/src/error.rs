use std::path::PathBuf;

use thiserror::Error;

use crate::kernel::Side;

pub type Result<T> = std::result::Result<T, Error>;

/// Coarse classification used to map failures onto process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Usage,
    Data,
    Numerical,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("insufficient support on the {side} side of c = {threshold}: {reason}")]
    InsufficientSupport {
        side: Side,
        threshold: f64,
        reason: &'static str,
    },
    #[error("no sample point admits a local linear fit")]
    DegenerateEverywhere,
    #[error("no observation within bandwidth {bandwidth} of c = {threshold}")]
    EmptyWindow { threshold: f64, bandwidth: f64 },
    #[error("homogeneity is undefined for fewer than two units")]
    SingleUnit,
    #[error("non-positive standardization scale for unit {0}")]
    ZeroVariance(String),
    #[error("alpha must lie in (0, 1), got {0}")]
    InvalidAlpha(f64),
    #[error("every unit was skipped: {0}")]
    AllUnitsSkipped(String),
    #[error("too few observations for bandwidth selection: {0}")]
    TooFewObservations(String),
    #[error("covariance block is not positive semidefinite (min eigenvalue {0:e})")]
    NotPositiveSemidefinite(f64),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("non-finite or unparsable value in column `{column}` at row {row}")]
    NonFiniteValue { row: usize, column: String },
    #[error("duplicate key (unit {unit}, time {time})")]
    DuplicateKey { unit: String, time: String },
    #[error("unit {0} has no observations")]
    EmptyUnit(String),
    #[error("input has no data rows")]
    EmptyPanel,
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("i/o failure on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::InvalidAlpha(_) | Error::InvalidConfig(_) => ErrorClass::Usage,
            Error::MissingColumn(_)
            | Error::NonFiniteValue { .. }
            | Error::DuplicateKey { .. }
            | Error::EmptyUnit(_)
            | Error::EmptyPanel
            | Error::Csv(_)
            | Error::Io { .. }
            | Error::TooFewObservations(_)
            | Error::SingleUnit => ErrorClass::Data,
            Error::InsufficientSupport { .. }
            | Error::DegenerateEverywhere
            | Error::EmptyWindow { .. }
            | Error::ZeroVariance(_)
            | Error::AllUnitsSkipped(_)
            | Error::NotPositiveSemidefinite(_) => ErrorClass::Numerical,
        }
    }
}

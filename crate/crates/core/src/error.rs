use thiserror::Error;

pub type Result<T, E = LabError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum LabError {
    #[error("invalid schedule:\n{}", .0.iter().map(|v| format!("  - {v}")).collect::<Vec<_>>().join("\n"))]
    InvalidSchedule(Vec<crate::schedule::Violation>),
    #[error("stage count {requested} exceeds the {available} configured stages")]
    StageOutOfRange { requested: usize, available: usize },
    #[error("index {index} lies outside the truncation [0, {n_trunc}]")]
    IndexOutOfRange { index: usize, n_trunc: usize },
    #[error("index {0} is not in a lay-off interval")]
    NotLayOff(usize),
    #[error("lattice coordinate out of range: {0}")]
    CoordOutOfRange(String),
    #[error("{what} exceeds the configured cap of {cap}")]
    CapExceeded { what: &'static str, cap: usize },
    #[error("polynomial degree {degree} exceeds the bound {bound}")]
    DegreeBound { degree: usize, bound: usize },
    #[error("scalar field mismatch: {0}")]
    FieldMismatch(String),
    #[error("vector is not supported in [{lo}, {hi}]")]
    SupportViolation { lo: usize, hi: usize },
    #[error("truncation too short: need index {needed}, have {n_trunc}")]
    TruncationTooShort { needed: usize, n_trunc: usize },
    #[error("leading coefficient of the system is zero")]
    ZeroLeadingCoefficient,
    #[error("precondition refused: {0}")]
    Refused(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("config: {0}")]
    Config(String),
    #[error("parse: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

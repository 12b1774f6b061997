use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("could not parse number {input:?}: {reason}")]
    Parse { input: String, reason: String },

    #[error("invalid instance: {0}")]
    InvalidInstance(String),

    #[error("invalid window: {0}")]
    InvalidWindow(String),

    #[error("{what} out of range: {detail}")]
    OutOfRange { what: &'static str, detail: String },

    #[error("table too small: need coverage up to {needed}, have {have}")]
    TableTooSmall { needed: f64, have: f64 },

    #[error("memory budget exceeded: {0}")]
    Budget(String),

    #[error("insufficient precision: {0}")]
    Precision(String),

    #[error("irrationality violated: {0}")]
    Irrational(String),

    #[error("quadrature did not converge: achieved error {achieved:e} > target {target:e}")]
    Accuracy { achieved: f64, target: f64 },

    #[error("empty minor arc: P/X = {p_over_x:e} >= R = {r:e}; use a larger convergent denominator")]
    EmptyMinorArc { p_over_x: f64, r: f64 },

    #[error("grid is not integration-grade: {0}")]
    Grid(String),

    #[error("infeasible program: {0}")]
    Infeasible(String),

    #[error("unbounded objective: {0}")]
    Unbounded(String),

    #[error("mismatched table: {0}")]
    Mismatch(String),

    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    /// Stable machine-readable identifier used in CLI error objects.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Parse { .. } => "parse",
            Error::InvalidInstance(_) => "invalid_instance",
            Error::InvalidWindow(_) => "invalid_window",
            Error::OutOfRange { .. } => "out_of_range",
            Error::TableTooSmall { .. } => "table_too_small",
            Error::Budget(_) => "budget",
            Error::Precision(_) => "precision",
            Error::Irrational(_) => "irrationality",
            Error::Accuracy { .. } => "accuracy",
            Error::EmptyMinorArc { .. } => "empty_minor_arc",
            Error::Grid(_) => "grid",
            Error::Infeasible(_) => "infeasible",
            Error::Unbounded(_) => "unbounded",
            Error::Mismatch(_) => "mismatch",
            Error::Io(_) => "io",
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

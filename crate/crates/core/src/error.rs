use alloc::string::String;
use alloc::vec::Vec;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("row {row}: expected {expected} cells, found {found}")]
    RowArity {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("row {row}, column `{column}`: cannot parse `{value}` as {expected}")]
    CellParse {
        row: usize,
        column: String,
        value: String,
        expected: &'static str,
    },
    #[error("schema error: {0}")]
    Schema(String),
    #[error("schema mismatch, offending columns: {}", .0.join(", "))]
    SchemaMismatch(Vec<String>),
    #[error("too few rows: have {rows}, need at least {required}")]
    TooFewRows { rows: usize, required: usize },
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("dimension mismatch: expected {expected} columns, got {found}")]
    Dimension { expected: usize, found: usize },
    #[error("label vectors differ in length: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("infeasible synthetic spec: {0}")]
    Infeasible(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("non-finite embedding coordinate at epoch {epoch}")]
    NonFinite { epoch: usize },
    #[error("curve fit did not converge, residual trace {trace:?}")]
    CurveFit { trace: Vec<f64> },
}

impl Error {
    /// True for failures of the numerical machinery rather than of the input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Numerical(_) | Error::NonFinite { .. } | Error::CurveFit { .. }
        )
    }
}

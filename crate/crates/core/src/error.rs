use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("covariate `{name}` has {distinct} distinct values, need at least {needed}")]
    DegenerateCovariate {
        name: String,
        distinct: usize,
        needed: usize,
    },

    #[error("unknown column `{0}`")]
    UnknownColumn(String),

    #[error("non-finite values in column `{column}` at rows {rows:?}")]
    NonFinite { column: String, rows: Vec<usize> },

    #[error("data error: {0}")]
    Data(String),

    #[error("matrix is not symmetric (max asymmetry {0:.3e})")]
    NotSymmetric(f64),

    #[error("singular matrix (condition estimate {condition:.3e}): {context}")]
    Singular { context: String, condition: f64 },

    #[error("PIRLS failed to converge after {iterations} iterations: {reason}")]
    PirlsDivergence {
        iterations: usize,
        reason: String,
        trace: Vec<f64>,
    },

    #[error("smoothing parameter optimization failed: {reason}")]
    OptimizationFailed { reason: String, trace: Vec<f64> },

    #[error("unsupported family `{0}` for this operation")]
    UnsupportedFamily(String),

    #[error("too few draws: have {have}, need {need}")]
    TooFewDraws { have: usize, need: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures of the numerical machinery rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Singular { .. }
                | Error::PirlsDivergence { .. }
                | Error::OptimizationFailed { .. }
                | Error::NotSymmetric(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;

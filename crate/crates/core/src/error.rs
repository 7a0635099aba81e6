use thiserror::Error;

/// Errors raised anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dataset is empty or too small: {0}")]
    EmptyData(String),

    #[error("outcome column `{column}` contains non-binary value {value} (probit mode)")]
    NonBinaryOutcome { column: String, value: f64 },

    #[error("outcome column `{0}` is constant")]
    ConstantOutcome(String),

    #[error("column `{column}`: {message}")]
    InvalidColumn { column: String, message: String },

    #[error("unknown category level `{level}` in column `{column}`")]
    UnknownCategoryLevel { column: String, level: String },

    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("inverse-Wishart degrees of freedom {df} must exceed d - 1 = {min}")]
    InvalidDegreesOfFreedom { df: f64, min: f64 },

    #[error("truncated normal tail sampler exceeded its iteration cap")]
    TailSamplingFailure,

    #[error("root not bracketed after {0} doublings")]
    RootNotBracketed(usize),

    #[error("degenerate design: {0}")]
    DegenerateDesign(String),

    #[error("correlation {0} is outside (-1, 1)")]
    OutOfSupport(f64),

    #[error("categorical split needs at least two observed levels")]
    SingleLevel,

    #[error("treatment column is constant; propensity model is degenerate")]
    AllOneTreatment,

    #[error("at least two draws are required, got {0}")]
    InsufficientDraws(usize),

    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),

    #[error("variance of the incremental net benefit is zero")]
    ZeroVariance,

    #[error("chain file: {0}")]
    ChainFormat(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Numerical failures map to CLI exit code 3, everything else to 2.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NotPositiveDefinite(_)
                | Error::TailSamplingFailure
                | Error::RootNotBracketed(_)
                | Error::ZeroVariance
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;

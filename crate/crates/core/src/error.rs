use thiserror::Error;

/// Errors raised by the estimation, forecasting and I/O layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("factorization failed: {0}")]
    FactorizationFailure(String),

    #[error("innovation variance is singular at t={t}, series {series}")]
    InnovationCovSingular { t: usize, series: usize },

    #[error("non-finite value in simulated sample at t={0}")]
    NonFiniteSample(usize),

    #[error("block structure violation: {0}")]
    BlockStructureViolation(String),

    #[error("posterior chain is empty")]
    EmptyChain,

    #[error("observation covariance is singular: {0}")]
    SingularObsCov(String),

    #[error("chain diverged at iteration {iteration}: {reason}")]
    ChainDiverged { iteration: usize, reason: String },

    #[error("within-chain variance is zero")]
    ZeroWithinVariance,

    #[error("k-means produced an empty cluster after {0} attempts")]
    EmptyCluster(usize),

    #[error("loading matrix H_x is rank deficient")]
    RankDeficientLoadings,

    #[error("alignment mismatch: {0}")]
    AlignmentMismatch(String),

    #[error("non-positive value {value} at position {index}")]
    NonPositiveValue { index: usize, value: f64 },

    #[error("schema error: {0}")]
    SchemaError(String),

    #[error("gap in time index for site {site} at period {period}")]
    GapInTimeIndex { site: String, period: String },

    #[error("adjacency references unknown site {0}")]
    UnknownSiteInAdjacency(String),

    #[error("invalid adjacency: {0}")]
    InvalidAdjacency(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable machine-readable tag, used by the CLI error record.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::DimensionMismatch(_) => "DimensionMismatch",
            Error::NotPositiveDefinite(_) => "NotPositiveDefinite",
            Error::FactorizationFailure(_) => "FactorizationFailure",
            Error::InnovationCovSingular { .. } => "InnovationCovSingular",
            Error::NonFiniteSample(_) => "NonFiniteSample",
            Error::BlockStructureViolation(_) => "BlockStructureViolation",
            Error::EmptyChain => "EmptyChain",
            Error::SingularObsCov(_) => "SingularObsCov",
            Error::ChainDiverged { .. } => "ChainDiverged",
            Error::ZeroWithinVariance => "ZeroWithinVariance",
            Error::EmptyCluster(_) => "EmptyCluster",
            Error::RankDeficientLoadings => "RankDeficientLoadings",
            Error::AlignmentMismatch(_) => "AlignmentMismatch",
            Error::NonPositiveValue { .. } => "NonPositiveValue",
            Error::SchemaError(_) => "SchemaError",
            Error::GapInTimeIndex { .. } => "GapInTimeIndex",
            Error::UnknownSiteInAdjacency(_) => "UnknownSiteInAdjacency",
            Error::InvalidAdjacency(_) => "InvalidAdjacency",
            Error::InvalidConfig(_) => "InvalidConfig",
            Error::InvalidInput(_) => "InvalidInput",
            Error::Parse(_) => "Parse",
            Error::Io(_) => "Io",
            Error::Csv(_) => "Csv",
            Error::Json(_) => "Json",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn dim_err(msg: impl Into<String>) -> Error {
    Error::DimensionMismatch(msg.into())
}

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}, row {row}: {message}")]
    MalformedRow {
        path: PathBuf,
        row: usize,
        message: String,
    },

    #[error("{path}: unexpected header {found:?}, expected {expected:?}")]
    BadHeader {
        path: PathBuf,
        found: String,
        expected: String,
    },

    #[error("duplicate record for firm {firm_id:?} in fiscal year {year}")]
    DuplicateRecord { firm_id: String, year: i32 },

    #[error("CPI series has no value for {year}-{month:02}")]
    CpiGap { year: i32, month: u8 },

    #[error("invalid CPI value {value} for {year}-{month:02}: must be strictly positive")]
    CpiNonPositive { year: i32, month: u8, value: f64 },

    #[error("panel cache {path}: {message}")]
    Cache { path: PathBuf, message: String },

    #[error("panel is empty after filtering")]
    EmptyPanel,

    #[error("empty denominator: {0}")]
    EmptyDenominator(String),

    #[error("not enough values: need at least {needed}, got {got}")]
    TooFewValues { needed: usize, got: usize },

    #[error("level {0} is outside [0, 1]")]
    LevelOutOfRange(f64),

    #[error("invalid parameter: {0}")]
    InvalidParams(String),

    #[error("unknown predictor {0:?}")]
    UnknownPredictor(String),

    #[error("bandwidth is zero (constant sample)")]
    ZeroBandwidth,

    #[error("value {0} is below the support of growth rates (-100)")]
    BelowSupport(f64),

    #[error("non-finite value in sample")]
    NonFinite,

    #[error("firm {0:?} not found in panel")]
    UnknownFirm(String),

    #[error("reference class not available: {0}")]
    Skipped(crate::refclass::SkipReason),

    #[error("outcome horizon {0} was not materialised")]
    HorizonNotBuilt(u32),

    #[error("invalid synthetic spec: {0}")]
    DegenerateSpec(String),

    #[error("grid file: {0}")]
    Grid(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

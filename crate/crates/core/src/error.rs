use thiserror::Error;

/// Errors raised by the estimation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("index {index} out of range (len {len})")]
    OutOfRange { index: usize, len: usize },

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("unit {unit} has {degree} neighbors, above the enumeration cap of {cap}; use Monte Carlo GPS")]
    EnumerationCap {
        unit: usize,
        degree: usize,
        cap: usize,
    },

    #[error("rank deficient design; collinear columns: {}", .columns.join(", "))]
    RankDeficient { columns: Vec<String> },

    #[error("numerically singular system: {0}")]
    Singular(String),

    #[error("no observations at exposure level {level}")]
    NoObservations { level: f64 },

    #[error("strata without observations at exposure level {level}: {strata:?}")]
    EmptyStrata { level: f64, strata: Vec<usize> },

    #[error("missing outcome-surface cells needed for imputation: {}", format_holes(.holes))]
    MissingCells { holes: Vec<(f64, f64)> },

    #[error(
        "estimator failed in {failed} of {total} bootstrap replicates (first failure: {first})"
    )]
    BootstrapFailures {
        failed: usize,
        total: usize,
        first: String,
    },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

/// Coarse classification used to map failures to process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Data,
    Numerical,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Validation(_) | Error::EnumerationCap { .. } => ErrorClass::Config,
            Error::Parse { .. }
            | Error::OutOfRange { .. }
            | Error::LengthMismatch { .. }
            | Error::NoObservations { .. }
            | Error::MissingCells { .. }
            | Error::EmptyStrata { .. }
            | Error::Io(_)
            | Error::Csv(_)
            | Error::Json(_) => ErrorClass::Data,
            Error::RankDeficient { .. } | Error::Singular(_) | Error::BootstrapFailures { .. } => {
                ErrorClass::Numerical
            }
        }
    }

    /// Short machine-readable tag.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Parse { .. } => "parse",
            Error::Validation(_) => "validation",
            Error::OutOfRange { .. } => "out_of_range",
            Error::LengthMismatch { .. } => "length_mismatch",
            Error::EnumerationCap { .. } => "enumeration_cap",
            Error::RankDeficient { .. } => "rank_deficient",
            Error::Singular(_) => "singular",
            Error::NoObservations { .. } => "no_observations",
            Error::MissingCells { .. } => "missing_cells",
            Error::EmptyStrata { .. } => "empty_strata",
            Error::BootstrapFailures { .. } => "bootstrap_failures",
            Error::Io(_) => "io",
            Error::Csv(_) => "csv",
            Error::Json(_) => "json",
        }
    }
}

fn format_holes(holes: &[(f64, f64)]) -> String {
    holes
        .iter()
        .map(|(e, r)| format!("(e={e}, r={r})"))
        .collect::<Vec<_>>()
        .join(", ")
}

pub type Result<T> = std::result::Result<T, Error>;

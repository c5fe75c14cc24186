use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Every failure the pipeline can report.
///
/// The [`Error::code`] string is the stable identifier shared by the HTTP
/// API and the command line tool.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("row {row} has {found} fields, expected {expected}")]
    RaggedRows { row: usize, expected: usize, found: usize },
    #[error("cell at row {row}, column {col} is not a finite number: {value:?}")]
    NonNumericCell { row: usize, col: usize, value: String },
    #[error("at least 3 rows are required, found {0}")]
    TooFewRows(usize),
    #[error("at least 2 numeric columns are required, found {0}")]
    TooFewColumns(usize),
    #[error("dataset has already been preprocessed")]
    AlreadyPreprocessed,
    #[error("dataset must be centered or autoscaled first")]
    NotPreprocessed,
    #[error("malformed input: {0}")]
    Parse(String),

    #[error("expected a vector of length {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("data has no variance to decompose")]
    DegenerateData,
    #[error("component count {requested} outside 1..={max}")]
    InvalidComponents { requested: usize, max: usize },
    #[error("component {index} out of range for a model with {available} components")]
    ComponentOutOfRange { index: usize, available: usize },
    #[error("selection {0:?} is empty")]
    EmptySelection(String),
    #[error("unknown selection {0:?}")]
    UnknownSelection(String),
    #[error("index {index} out of range (limit {limit})")]
    IndexOutOfRange { index: usize, limit: usize },

    #[error("perplexity {perplexity} must lie strictly between 1 and {n_samples}")]
    PerplexityInfeasible { perplexity: f64, n_samples: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("optimization diverged at epoch {epoch}; lower the learning rate")]
    NumericalDivergence { epoch: usize },
    #[error("curve fit residual {rms} exceeds tolerance")]
    FitDiverged { rms: f64 },

    #[error("query ({x}, {y}) lies outside the diagram bounds")]
    OutsideBbox { x: f64, y: f64 },

    #[error("session data is corrupt: {0}")]
    CorruptSession(String),
    #[error("session format version {found} is not supported (expected {expected})")]
    VersionMismatch { expected: u32, found: u32 },
    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    pub fn code(&self) -> &'static str {
        match self {
            Error::RaggedRows { .. } => "ragged_rows",
            Error::NonNumericCell { .. } => "non_numeric_cell",
            Error::TooFewRows(_) => "too_few_rows",
            Error::TooFewColumns(_) => "too_few_columns",
            Error::AlreadyPreprocessed => "already_preprocessed",
            Error::NotPreprocessed => "not_preprocessed",
            Error::Parse(_) => "parse_error",
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::DegenerateData => "degenerate_data",
            Error::InvalidComponents { .. } => "invalid_components",
            Error::ComponentOutOfRange { .. } => "component_out_of_range",
            Error::EmptySelection(_) => "empty_selection",
            Error::UnknownSelection(_) => "unknown_selection",
            Error::IndexOutOfRange { .. } => "index_out_of_range",
            Error::PerplexityInfeasible { .. } => "perplexity_infeasible",
            Error::InvalidConfig(_) => "invalid_config",
            Error::NumericalDivergence { .. } => "numerical_divergence",
            Error::FitDiverged { .. } => "fit_diverged",
            Error::OutsideBbox { .. } => "outside_bbox",
            Error::CorruptSession(_) => "corrupt_session",
            Error::VersionMismatch { .. } => "version_mismatch",
            Error::Io(_) => "io_error",
        }
    }

    /// True when the failure is caused by the caller's input rather than by
    /// the numerical machinery.
    pub fn is_client_error(&self) -> bool {
        !matches!(
            self,
            Error::NumericalDivergence { .. } | Error::FitDiverged { .. } | Error::Io(_)
        )
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub(crate) fn check_len(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}

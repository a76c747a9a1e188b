use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("clock misuse: requested time {now} precedes last programming event at {last}")]
    ClockMisuse { now: f64, last: f64 },

    #[error("value out of domain: {0}")]
    Domain(String),

    #[error("dimension mismatch: expected {expected}, got {got} ({what})")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("weight {value} exceeds the mappable range ±{w_max}; rescale the matrix")]
    Range { value: f64, w_max: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("recovery diverged at iteration {iteration}")]
    Divergence { iteration: usize },

    #[error("singular system: {0}")]
    Singular(String),

    #[error("empty dataset")]
    EmptyDataset,

    #[error("config error: {0}")]
    Config(String),

    #[error("unknown experiment '{0}'")]
    UnknownExperiment(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Stable snake_case name of the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::ClockMisuse { .. } => "clock_misuse",
            Error::Domain(_) => "domain",
            Error::Dimension { .. } => "dimension",
            Error::Range { .. } => "range",
            Error::InvalidParam(_) => "invalid_param",
            Error::Divergence { .. } => "divergence",
            Error::Singular(_) => "singular",
            Error::EmptyDataset => "empty_dataset",
            Error::Config(_) => "config",
            Error::UnknownExperiment(_) => "unknown_experiment",
            Error::NonFinite(_) => "non_finite",
            Error::Parse(_) => "parse",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
        }
    }
}

pub(crate) fn check_len(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Dimension { what, expected, got })
    }
}

use thiserror::Error;

/// Errors raised by fitting, estimation, inference, simulation and I/O.
#[derive(Debug, Error)]
pub enum Error {
    #[error("empty data: {0}")]
    EmptyData(String),

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("design matrix is rank deficient")]
    SingularDesign,

    #[error("covariate has zero sum of squares")]
    DegenerateCovariate,

    #[error("parameter outside model domain: {0}")]
    Domain(String),

    #[error("non-finite score or hessian at theta = {0:?}")]
    NonFinite(Vec<f64>),

    #[error("bread matrix A_n is singular")]
    BreadSingular,

    #[error("meat matrix B_n is singular or zero")]
    DegenerateMeat,

    #[error("leverage equals one for observation {0}")]
    DegenerateLeverage(usize),

    #[error("correction {0} is not supported for a {1}-dimensional target")]
    UnsupportedCorrection(&'static str, usize),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("parse error at row {row}, column '{column}': {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short machine-readable category, used for CLI exit reporting.
    pub fn category(&self) -> &'static str {
        match self {
            Error::EmptyData(_) | Error::InvalidData(_) | Error::Parse { .. } => "data",
            Error::SingularDesign | Error::DegenerateCovariate => "design",
            Error::Domain(_) | Error::NonFinite(_) => "domain",
            Error::BreadSingular | Error::DegenerateMeat | Error::DegenerateLeverage(_) => {
                "degenerate"
            }
            Error::UnsupportedCorrection(..) | Error::Config(_) => "config",
            Error::Io(_) | Error::Csv(_) | Error::Json(_) => "io",
        }
    }

    /// True for the per-dataset numerical failures that a Monte Carlo
    /// replicate records as degenerate instead of aborting.
    pub fn is_degenerate(&self) -> bool {
        matches!(
            self,
            Error::SingularDesign
                | Error::DegenerateCovariate
                | Error::BreadSingular
                | Error::DegenerateMeat
                | Error::DegenerateLeverage(_)
                | Error::NonFinite(_)
                | Error::Domain(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;

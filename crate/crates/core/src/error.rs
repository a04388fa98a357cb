use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("value {value} outside basis domain [{lo}, {hi}]")]
    Domain { value: f64, lo: f64, hi: f64 },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("degenerate basis for component ({target}, {argument}): every column annihilated")]
    DegenerateBasis { target: usize, argument: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid data: {0}")]
    Data(String),

    #[error("collinear design: column `{label}` is linearly dependent on earlier columns")]
    Collinearity { label: String },

    #[error("parametric block not identified (smallest scaled eigenvalue {min_eigenvalue:.3e})")]
    Identification { min_eigenvalue: f64 },

    #[error("order selection failed: {0}")]
    Selection(String),

    #[error("bootstrap unstable: {dropped} of {total} draws failed")]
    BootstrapInstability { dropped: usize, total: usize },

    #[error("weak instrument: first-stage R^2 = {r_squared:.3e}")]
    WeakInstrument { r_squared: f64 },

    #[error("degenerate truncation: {0}")]
    DegenerateTruncation(String),

    #[error("invalid specification: {0}")]
    InvalidSpec(String),

    #[error("study aborted: {failed} of {total} replications failed")]
    StudyFailed { failed: usize, total: usize },
}

impl Error {
    /// Stable machine-readable name of the error kind.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Domain { .. } => "DomainError",
            Error::EmptyInput(_) => "EmptyInputError",
            Error::DegenerateBasis { .. } => "DegenerateBasisError",
            Error::Shape(_) => "ShapeError",
            Error::Data(_) => "DataError",
            Error::Collinearity { .. } => "CollinearityError",
            Error::Identification { .. } => "IdentificationError",
            Error::Selection(_) => "SelectionError",
            Error::BootstrapInstability { .. } => "BootstrapInstabilityError",
            Error::WeakInstrument { .. } => "WeakInstrumentError",
            Error::DegenerateTruncation(_) => "DegenerateTruncationError",
            Error::InvalidSpec(_) => "InvalidSpecError",
            Error::StudyFailed { .. } => "StudyFailedError",
        }
    }
}

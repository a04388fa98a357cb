use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("column `{column}` not found in {path}")]
    Schema { column: String, path: String },

    #[error("row {row}, column `{column}`: cannot parse `{value}` as a finite number")]
    Parse {
        row: usize,
        column: String,
        value: String,
    },

    #[error("row {row}, column `{column}`: missing value")]
    Missing { row: usize, column: String },

    #[error("{0}")]
    Io(String),

    #[error("{0}")]
    Config(String),

    #[error(transparent)]
    Model(#[from] randcoef::Error),
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Schema { .. } => "SchemaError",
            CliError::Parse { .. } => "ParseError",
            CliError::Missing { .. } => "MissingValueError",
            CliError::Io(_) => "IoError",
            CliError::Config(_) => "ConfigError",
            CliError::Model(e) => e.kind(),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;

use quacc::QuaccError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),

    #[error("{0}")]
    Data(String),

    #[error("{0}")]
    Estimation(String),

    #[error("cannot write `{path}`: {source}")]
    Output {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) | CliError::Output { .. } => 3,
            CliError::Estimation(_) => 4,
        }
    }
}

impl From<QuaccError> for CliError {
    fn from(e: QuaccError) -> Self {
        match &e {
            QuaccError::Io(_)
            | QuaccError::Csv(_)
            | QuaccError::NoHeader
            | QuaccError::RaggedRow { .. }
            | QuaccError::DuplicateColumn(_)
            | QuaccError::EmptyColumnName(_)
            | QuaccError::ParseCell { .. }
            | QuaccError::UnknownVariable(_)
            | QuaccError::MissingValues(_) => CliError::Data(e.to_string()),
            QuaccError::InvalidArgument(_) => CliError::Config(e.to_string()),
            _ => CliError::Estimation(e.to_string()),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

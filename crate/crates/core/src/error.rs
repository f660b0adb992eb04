use thiserror::Error;

pub type Result<T> = std::result::Result<T, QuaccError>;

#[derive(Debug, Error)]
pub enum QuaccError {
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("no header")]
    NoHeader,

    #[error("ragged row {row}: expected {expected} cells, found {found}")]
    RaggedRow {
        row: u64,
        expected: usize,
        found: usize,
    },

    #[error("duplicate column name `{0}`")]
    DuplicateColumn(String),

    #[error("empty column name at position {0}")]
    EmptyColumnName(usize),

    #[error("unparseable cell `{value}` at row {row}, column `{column}`")]
    ParseCell {
        row: u64,
        column: String,
        value: String,
    },

    #[error("unknown variable `{0}`")]
    UnknownVariable(String),

    #[error("column `{0}` has missing values")]
    MissingValues(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("singular design: {0}")]
    SingularDesign(String),

    #[error("quantile regression did not converge after {0} iterations")]
    NoConvergence(usize),

    #[error("insufficient sample: {0}")]
    InsufficientSample(String),

    #[error("tau too extreme for n: tau={tau}, n={n}")]
    TauTooExtreme { tau: f64, n: usize },

    #[error("fold {fold}: {source}")]
    Fold {
        fold: usize,
        #[source]
        source: Box<QuaccError>,
    },

    #[error("degenerate pair: `{0}` tested against itself")]
    DegeneratePair(String),

    #[error("test {x} _||_ {y} | {{{set}}} failed: {source}")]
    CiTest {
        x: String,
        y: String,
        set: String,
        #[source]
        source: Box<QuaccError>,
    },

    #[error("vertex sets differ")]
    VertexMismatch,
}

impl QuaccError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        QuaccError::InvalidArgument(msg.into())
    }

    /// True for errors caused by too little data rather than bad input.
    pub fn is_insufficient_sample(&self) -> bool {
        match self {
            QuaccError::InsufficientSample(_) | QuaccError::TauTooExtreme { .. } => true,
            QuaccError::Fold { source, .. } => source.is_insufficient_sample(),
            _ => false,
        }
    }
}

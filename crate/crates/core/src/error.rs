use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("unknown group `{0}`")]
    UnknownGroup(String),

    #[error("no decision policy for group `{0}`")]
    MissingPolicy(String),

    #[error("duplicate group label `{0}`")]
    DuplicateGroup(String),

    #[error("need at least {needed} groups, found {found}")]
    TooFewGroups { needed: usize, found: usize },

    #[error("invalid density: {0}")]
    InvalidDensity(String),

    #[error("grid mismatch: expected {expected} cells, found {found}")]
    GridMismatch { expected: usize, found: usize },

    #[error("score map value {value} at cell {cell} is outside [0, 1]")]
    MapOutOfRange { cell: usize, value: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("infeasible target: {0}")]
    Infeasible(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("undefined quantity: {0}")]
    Undefined(String),

    #[error("row {row}: {message}")]
    Parse { row: usize, message: String },

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Io(err.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

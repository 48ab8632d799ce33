use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty user id")]
    EmptyUserId,

    #[error("unknown node {0:?}")]
    UnknownNode(String),

    #[error("negative or non-finite value {value} at position {index}")]
    InvalidValue { index: usize, value: f64 },

    #[error("malformed header: expected columns {expected:?}, found {found:?}")]
    BadHeader {
        expected: Vec<String>,
        found: Vec<String>,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate data: {0}")]
    Degenerate(String),

    #[error("tree {tree} has no out-of-bag rows")]
    NoOobRows { tree: usize },

    #[error("row width {found} does not match feature count {expected}")]
    WidthMismatch { expected: usize, found: usize },

    #[error("unknown attribute {0:?}")]
    UnknownAttribute(String),

    #[error("protocol mismatch: {0}")]
    ProtocolMismatch(String),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("{path}: {source}")]
    InFile {
        path: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn in_file(path: impl AsRef<std::path::Path>, source: impl Into<Error>) -> Self {
        Error::InFile { path: path.as_ref().display().to_string(), source: Box::new(source.into()) }
    }

    /// The innermost error, past any file context.
    pub fn root(&self) -> &Error {
        match self {
            Error::InFile { source, .. } => source.root(),
            e => e,
        }
    }

    /// Degenerate data as opposed to unreadable or invalid input.
    pub fn is_degenerate(&self) -> bool {
        matches!(self.root(), Error::Degenerate(_) | Error::NoOobRows { .. })
    }
}

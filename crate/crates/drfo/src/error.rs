use thiserror::Error;

/// Unified error type for the library.
///
/// Variants are grouped by how a caller should react: `Parse`/`Integrity`
/// mean the input data is bad, `Usage`/`Config` mean the caller asked for
/// something invalid, `Degenerate`/`Metric` mean a quantity is undefined on
/// this data, and `Numerical` means an iterative routine failed to converge
/// or produced non-finite values.
#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("data integrity: {0}")]
    Integrity(String),

    #[error("invalid argument: {0}")]
    Usage(String),

    #[error("config: {0}")]
    Config(String),

    #[error("degenerate data: {0}")]
    Degenerate(String),

    #[error("metric undefined: {0}")]
    Metric(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("missing artifact for stage `{stage}`: {path} (run the prerequisite stage first)")]
    MissingArtifact { stage: String, path: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn parse(line: usize, msg: impl Into<String>) -> Self {
        Error::Parse { line, msg: msg.into() }
    }

    /// Process exit code category used by the CLI: 2 for usage/config
    /// mistakes, 3 for missing pipeline artifacts, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) | Error::Config(_) => 2,
            Error::MissingArtifact { .. } => 3,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

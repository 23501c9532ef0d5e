use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid symmetry descriptor: {0}")]
    InvalidDescriptor(String),

    #[error("unsupported symmetry: {0}")]
    UnsupportedSymmetry(String),

    /// The evaluation point sits on a tie of the minimum over the symmetry
    /// group; the caller should draw a new configuration.
    #[error("tie at minimum over symmetry group (gap {gap:e})")]
    TieAtMinimum { gap: f64 },

    #[error("scene generation failed: {0}")]
    GenerationFailed(String),

    #[error("ply parse error at line {line}: {message}")]
    Ply { line: usize, message: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("{stage}: {source}")]
    Stage { stage: &'static str, source: Box<Error> },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    /// Tags the error with the pipeline stage that produced it.
    pub fn in_stage(self, stage: &'static str) -> Error {
        Error::Stage { stage, source: Box::new(self) }
    }
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}

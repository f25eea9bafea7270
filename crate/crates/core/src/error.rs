use thiserror::Error;

/// Error type shared by every module in the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration value (zero dimension, bad ratio, unknown mode, ...).
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// A vector had the wrong length for the configured head dimension.
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    /// Operation requires a non-empty cache.
    #[error("cache is empty")]
    EmptyCache,

    /// Operation requires a non-empty page.
    #[error("page is empty")]
    EmptyPage,

    /// Operation requires non-empty input.
    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    /// A page index referenced a page that does not exist.
    #[error("page index {id} out of range: cache has {pages} pages")]
    PageIndexOutOfRange { id: usize, pages: usize },

    /// A selection violated its structural invariants.
    #[error("invalid selection: {0}")]
    InvalidSelection(String),

    /// A budget exceeded what is available (K > P, K > L, ...).
    #[error("budget error: {0}")]
    Budget(String),

    /// A probability vector did not sum to one (or had negative entries).
    #[error("probabilities not normalized: {0}")]
    NotNormalized(String),

    /// NaN or infinity where a finite value is required.
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    /// Argument outside the mathematical domain of a formula.
    #[error("domain error: {0}")]
    Domain(String),

    /// A session latched by the entropy early exit was stepped again.
    #[error("session {0} is stopped (entropy early exit latched)")]
    SessionStopped(u64),

    /// An error raised while processing a specific decode step.
    #[error("step {step}: {source}")]
    AtStep {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    /// Trace file violated the line-delimited format.
    #[error("trace format error at line {line}: {msg}")]
    TraceFormat { line: usize, msg: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Wrap an error with the decode step (1-based) it occurred at.
    pub fn at_step(self, step: usize) -> Error {
        Error::AtStep {
            step,
            source: Box::new(self),
        }
    }

    /// True for errors caused by bad configuration rather than a failed
    /// computation; the CLI maps these to exit code 2.
    pub fn is_config(&self) -> bool {
        match self {
            Error::InvalidConfig(_) | Error::TraceFormat { .. } => true,
            Error::AtStep { source, .. } => source.is_config(),
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

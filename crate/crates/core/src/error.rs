use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the assessment engine, its loaders and the replay harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid descriptor {id:?}: {reason}")]
    InvalidDescriptor { id: String, reason: String },

    #[error("kernel width must be positive and finite, got {0}")]
    InvalidKernelWidth(f64),

    #[error("threshold must lie in (0, 1), got {0}")]
    InvalidThreshold(f64),

    #[error("mean target must lie in (0, 1), got {0}")]
    InvalidMeanTarget(f64),

    #[error("reference collection needs at least 2 entries, got {0}")]
    InsufficientReference(usize),

    #[error(
        "degenerate reference: {zero_fraction:.4} of entries have a zero-distance nearest neighbor \
         (mean target {mean_target})"
    )]
    DegenerateReference {
        zero_fraction: f64,
        mean_target: f64,
    },

    #[error(
        "calibration did not reach the mean target within {tolerance:e} (residual {residual:e})"
    )]
    CalibrationDidNotConverge { residual: f64, tolerance: f64 },

    #[error("no token of {0:?} is in the lexicon")]
    AllTokensOutOfVocabulary(String),

    #[error("phrase {0:?} embeds to a zero vector")]
    ZeroVector(String),

    #[error("lexicon is empty")]
    EmptyLexicon,

    #[error("reference atlas is empty")]
    EmptyAtlas,

    #[error("atlas entry {0:?} has no label")]
    UnlabeledAtlasEntry(String),

    #[error("invalid knowledge statement {0:?}: expected \"competent:<phrase>\" or \"incompetent:<phrase>\"")]
    InvalidStatement(String),

    #[error("line {line}: malformed record: {reason}")]
    MalformedRecord { line: usize, reason: String },

    #[error("line {line}: dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatchAt {
        line: usize,
        expected: usize,
        found: usize,
    },

    #[error("line {line}: duplicate id {id:?}")]
    DuplicateId { line: usize, id: String },

    #[error("line {line}: non-finite value in vector")]
    NonFiniteValue { line: usize },

    #[error("line {line}: frame index {found} does not follow {previous}")]
    NonMonotoneFrameIndex {
        line: usize,
        previous: u64,
        found: u64,
    },

    #[error("unsupported format version {0}")]
    UnsupportedVersion(u32),

    #[error("malformed document: {0}")]
    MalformedDocument(String),

    #[error("feedback unavailable: {0}")]
    FeedbackUnavailable(String),

    #[error("invalid synthetic episode spec: {0}")]
    InvalidSpec(String),

    #[error("invalid run configuration: {0}")]
    InvalidConfig(String),

    #[error("cannot bind port {port}: {source}")]
    BindFailure {
        port: u16,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: {source}", path.display())]
    File {
        path: PathBuf,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn in_file(self, path: impl Into<PathBuf>) -> Self {
        Error::File {
            path: path.into(),
            source: Box::new(self),
        }
    }

    /// The innermost error, unwrapping any file-path context.
    pub fn root(&self) -> &Error {
        match self {
            Error::File { source, .. } => source.root(),
            other => other,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

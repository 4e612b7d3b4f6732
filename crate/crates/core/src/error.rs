//! Error type shared by every module of the toolkit.
//!
//! Each variant's `Display` output starts with the variant name so command
//! line diagnostics stay greppable (`EmptyConcept: ...`).

use std::path::PathBuf;

/// Result alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("IoFailure: {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("BadMagic: expected `CGT1` header")]
    BadMagic,

    #[error("UnknownKind: matrix kind tag {0} is not 0 (unembedding) or 1 (embedding set)")]
    UnknownKind(u8),

    #[error("KindMismatch: expected a {expected} matrix file, found {found}")]
    KindMismatch {
        expected: &'static str,
        found: &'static str,
    },

    #[error(
        "ShapeMismatch: header declares {rows}x{cols} ({expected} payload bytes), found {actual}"
    )]
    ShapeMismatch {
        rows: usize,
        cols: usize,
        expected: usize,
        actual: usize,
    },

    #[error("NonFiniteEntry: entry ({row}, {col}) is not finite")]
    NonFiniteEntry { row: usize, col: usize },

    #[error("InvalidShape: {0}")]
    InvalidShape(String),

    #[error("LabelCountMismatch: {labels} labels for {rows} rows")]
    LabelCountMismatch { labels: usize, rows: usize },

    #[error("MalformedLine: line {line}: {reason}")]
    MalformedLine { line: usize, reason: String },

    #[error("EmptyConcept: {0}")]
    EmptyConcept(String),

    #[error("DuplicatePair: concept `{concept}` repeats pair ({id0}, {id1})")]
    DuplicatePair {
        concept: String,
        id0: usize,
        id1: usize,
    },

    #[error("DuplicateTokenInPair: concept `{concept}` pairs token {id} with itself")]
    DuplicateTokenInPair { concept: String, id: usize },

    #[error("RepeatedQuadrupleId: quadruple `{names}` uses token {id} more than once")]
    RepeatedQuadrupleId { names: String, id: usize },

    #[error("IdOutOfRange: token id {id} outside vocabulary of size {vocab_size}")]
    IdOutOfRange { id: usize, vocab_size: usize },

    #[error("DegenerateVocab: need at least {required} vocabulary rows, found {found}")]
    DegenerateVocab { required: usize, found: usize },

    #[error(
        "SingularAfterRidge: smallest regularized eigenvalue {min_eigenvalue:e} (ridge {ridge:e})"
    )]
    SingularAfterRidge { min_eigenvalue: f64, ridge: f64 },

    #[error("SingularCovariance: covariance matrix is not invertible")]
    SingularCovariance,

    #[error("DimMismatch: expected dimension {expected}, found {found}")]
    DimMismatch { expected: usize, found: usize },

    #[error("NotSquare: matrix is {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },

    #[error("NullDirection: concept `{concept}` mean difference has causal norm {norm:e}")]
    NullDirection { concept: String, norm: f64 },

    #[error("TooFewPairs: concept `{concept}` has {found} pairs, need at least {required}")]
    TooFewPairs {
        concept: String,
        found: usize,
        required: usize,
    },

    #[error("EmptyGroup: probe group `{0}` has no contexts")]
    EmptyGroup(String),

    #[error("KOutOfRange: k = {k} outside 1..={vocab_size}")]
    KOutOfRange { k: usize, vocab_size: usize },

    #[error("InvalidAlphaGrid: {0}")]
    InvalidAlphaGrid(String),

    #[error("InvalidSpec: {0}")]
    InvalidSpec(String),

    #[error("ZeroVariance: score list is constant")]
    ZeroVariance,
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
        if expected == found {
            Ok(())
        } else {
            Err(Error::DimMismatch { expected, found })
        }
    }
}

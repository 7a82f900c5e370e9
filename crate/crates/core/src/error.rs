use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("missing file: {}", .0.display())]
    MissingFile(PathBuf),

    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{source_name}:{line}: {message}")]
    Format {
        source_name: String,
        line: usize,
        message: String,
    },

    #[error("ambiguous surface form {form:?} shared by entities {first} and {second}")]
    AmbiguousSurfaceForm {
        form: String,
        first: String,
        second: String,
    },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("graph has no sampleable edges")]
    NoSampleableEdges,

    #[error("undefined cosine: {0}")]
    UndefinedCosine(String),

    #[error("no gold facts to evaluate against")]
    NoGoldFacts,

    #[error("no long-tail relations selected")]
    NoLongTailRelations,

    #[error("empty bag")]
    EmptyBag,

    #[error("backward pass requires a forward cache; run the forward pass in training mode")]
    MissingCache,

    #[error("orphan node {node:?} in hierarchy layer {layer}")]
    OrphanNode { layer: usize, node: String },

    #[error("infeasible configuration: {0}")]
    Infeasible(String),
}

/// Coarse classification used for process exit codes and FFI status codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    MissingFile,
    Io,
    Format,
    Dimension,
    InvalidArgument,
    Numeric,
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::MissingFile(_) => ErrorKind::MissingFile,
            Error::Io { .. } => ErrorKind::Io,
            Error::Format { .. } | Error::AmbiguousSurfaceForm { .. } | Error::OrphanNode { .. } => {
                ErrorKind::Format
            }
            Error::DimensionMismatch(_) => ErrorKind::Dimension,
            Error::Numeric(_) | Error::UndefinedCosine(_) => ErrorKind::Numeric,
            Error::InvalidArgument(_)
            | Error::NoSampleableEdges
            | Error::NoGoldFacts
            | Error::NoLongTailRelations
            | Error::EmptyBag
            | Error::MissingCache
            | Error::Infeasible(_) => ErrorKind::InvalidArgument,
        }
    }

    /// Stable machine-readable tag for the error category.
    pub fn tag(&self) -> &'static str {
        match self {
            Error::MissingFile(_) => "missing-file",
            Error::Io { .. } => "io",
            Error::Format { .. } => "format-violation",
            Error::AmbiguousSurfaceForm { .. } => "ambiguous-surface-form",
            Error::DimensionMismatch(_) => "dimension-mismatch",
            Error::InvalidArgument(_) => "invalid-argument",
            Error::Numeric(_) => "numeric-failure",
            Error::NoSampleableEdges => "no-sampleable-edges",
            Error::UndefinedCosine(_) => "undefined-cosine",
            Error::NoGoldFacts => "no-gold-facts",
            Error::NoLongTailRelations => "no-long-tail-relations",
            Error::EmptyBag => "empty-bag",
            Error::MissingCache => "missing-cache",
            Error::OrphanNode { .. } => "orphan-node",
            Error::Infeasible(_) => "infeasible-config",
        }
    }

    pub(crate) fn format(source_name: impl Into<String>, line: usize, message: impl Into<String>) -> Self {
        Error::Format {
            source_name: source_name.into(),
            line,
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        let path = path.into();
        if source.kind() == std::io::ErrorKind::NotFound {
            Error::MissingFile(path)
        } else {
            Error::Io { path, source }
        }
    }
}

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = VarNetError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum VarNetError {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("attribute spec error: {0}")]
    Spec(String),

    #[error("metadata error in attribute block {block} ({kind}): {reason}")]
    Metadata {
        block: usize,
        kind: &'static str,
        reason: String,
    },

    #[error("prior sampling error: {0}")]
    Prior(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("batch error: {0}")]
    Batch(String),

    #[error("non-finite value in `{term}`{}", step.map(|s| format!(" at step {s}")).unwrap_or_default())]
    Numerics { term: String, step: Option<u64> },

    #[error("grid error: {0}")]
    Grid(String),

    #[error("pipeline error: {0}")]
    Pipeline(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("dataset `{id}` not found under {dir}: {hint}")]
    MissingDataset {
        id: String,
        dir: PathBuf,
        hint: String,
    },

    #[error("format error: {0}")]
    Format(String),

    #[error("checkpoint format version {found} is not supported (expected {expected})")]
    Version { found: u32, expected: u32 },
}

impl VarNetError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }

    pub fn numerics(term: impl Into<String>) -> Self {
        Self::Numerics {
            term: term.into(),
            step: None,
        }
    }

    /// Attaches a training step to a numerics error; other variants pass through.
    pub fn at_step(self, step: u64) -> Self {
        match self {
            Self::Numerics { term, .. } => Self::Numerics {
                term,
                step: Some(step),
            },
            other => other,
        }
    }
}

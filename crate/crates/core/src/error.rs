use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed document: {0}")]
    MalformedDocument(String),

    #[error("schema violation: {0}")]
    SchemaViolation(String),

    #[error("validation failed: {}", .0.join("; "))]
    Validation(Vec<String>),

    #[error("even sampling lattice has {size} points, above the cap of {cap}")]
    ComboExplosion { size: u128, cap: usize },

    #[error("packing volume yields an empty grid")]
    EmptyGrid,

    #[error("no free grid point left")]
    NoFreePoint,

    #[error("outputs span different runs ({0} and {1})")]
    MismatchedRun(u32, u32),

    #[error("density volumes differ in shape")]
    ShapeMismatch,

    #[error("duplicate run index {0}")]
    DuplicateRun(u32),

    #[error("unknown dimension `{0}`")]
    UnknownDimension(String),

    #[error("not found: {0}")]
    NotFound(String),

    #[error("{path}: existing file differs from the recomputed output")]
    Conflict { path: PathBuf },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn from_json(err: serde_json::Error) -> Self {
        use serde_json::error::Category;
        match err.classify() {
            Category::Syntax | Category::Eof | Category::Io => {
                Error::MalformedDocument(err.to_string())
            }
            Category::Data => Error::SchemaViolation(err.to_string()),
        }
    }
}

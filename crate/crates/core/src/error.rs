use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("template validation failed: {}", .0.join("; "))]
    Validation(Vec<String>),

    #[error("mesh is not watertight: {open_edges} open edge(s)")]
    NotWatertight { open_edges: usize },

    #[error("mesh has zero surface area")]
    ZeroArea,

    #[error("no cross-section loop at height h = {h:.4} (skeleton leaves the part)")]
    NoSection { h: f64 },

    #[error("cross-section loop degenerates to near-zero area")]
    DegenerateLoop,

    #[error("hand does not touch object (no sample within tau_c = {tau_c} cm)")]
    NoContact { tau_c: f64 },

    #[error("every contact point was dropped while lifting to the cylinder")]
    AllContactsDropped,

    #[error("non-finite {term} at iteration {iteration}")]
    NonFinite { term: &'static str, iteration: usize },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True when the failure comes from bad or missing input rather than from
    /// the method itself.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::Io { .. }
                | Error::Parse { .. }
                | Error::Json(_)
                | Error::Invalid(_)
                | Error::Validation(_)
                | Error::NotWatertight { .. }
                | Error::ZeroArea
        )
    }
}

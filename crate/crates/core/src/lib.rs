//! Finite element simulation of continuous data assimilation (nudging) for
//! 2D incompressible flow when the assimilating model omits a term of the
//! data-generating dynamics.
//!
//! The pipeline is: [`mesh`] → [`spaces`] → [`assembly`] / [`observation`] →
//! [`linsolve`] → [`stepping`], with problem definitions in [`models`] and the
//! reproducible studies in [`experiments`].

pub mod assembly;
pub mod config;
pub mod experiments;
pub mod linsolve;
pub mod mesh;
pub mod models;
pub mod observation;
pub mod spaces;
pub mod stepping;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("linear solve failed: {0}")]
    Solver(String),
    #[error("simulation aborted at step {step} (t = {time}): {reason}")]
    Simulation { step: usize, time: f64, reason: String },
    #[error("observation data: {0}")]
    Observation(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Error {
        Error::Io { path: path.as_ref().display().to_string(), source }
    }
}

use std::path::PathBuf;

use thiserror::Error;

/// Errors produced across the toolkit.
#[derive(Debug, Error)]
pub enum CompassError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("failed to decode image {path}: {message}")]
    Decode { path: PathBuf, message: String },
    #[error("invalid floor plan: {0}")]
    InvalidPlan(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("descriptor shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("database contains no candidates")]
    EmptyDatabase,
    #[error("no candidate survived the transition-signature pre-filter (tolerance {tolerance})")]
    EmptyAfterFilter { tolerance: u32 },
    #[error("malformed database file: {0}")]
    Format(String),
    #[error("bearing outside the field of view (incidence {theta:.6} rad > {theta_max:.6} rad)")]
    OutOfFov { theta: f64, theta_max: f64 },
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("unsupported attitude: {0}")]
    UnsupportedAttitude(String),
    #[error("no attitude: {0}")]
    NoAttitude(String),
    #[error("infeasible synthetic plan: {0}")]
    InfeasiblePlan(String),
    #[error("pose lies inside structure at ({x:.3}, {y:.3})")]
    PoseInStructure { x: f64, y: f64 },
    #[error("parse error: {0}")]
    Parse(String),
}

impl CompassError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CompassError::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, CompassError>;

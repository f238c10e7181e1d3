use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("point ({x:.3}, {y:.3}) is {distance:.3} m from the centerline, outside the projection domain")]
    OutOfDomain { x: f64, y: f64, distance: f64 },

    #[error("lateral offset {n:.4} m reaches the local radius of curvature {radius:.4} m at s = {s:.3}")]
    DegenerateOffset { s: f64, n: f64, radius: f64 },

    #[error("non-finite state after substep {substep}")]
    NumericalBlowup { substep: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("log gap of {gap_ms:.1} ms at t = {t:.3} s")]
    LogGap { t: f64, gap_ms: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("optimization diverged at epoch {epoch} (loss {loss:.3e}); try a smaller learning rate")]
    Divergence { epoch: usize, loss: f64 },

    #[error("training error: {0}")]
    Training(String),

    #[error("corrupt checkpoint: {0}")]
    CorruptCheckpoint(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }
}

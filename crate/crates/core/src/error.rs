use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the unmixing pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed {what}: {reason}")]
    Format { what: String, reason: String },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite value at {0}")]
    NonFinite(String),

    #[error("abundance simplex violation at column {column}: {reason}")]
    SimplexViolation { column: usize, reason: String },

    #[error("zero spectrum at pixel {0}")]
    ZeroSpectrum(usize),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate result: {0}")]
    Degenerate(String),

    #[error("inseparable degenerate pair ({0}, {1})")]
    InseparablePair(usize, usize),

    #[error("degenerate arrangement: k < m ({cells} populated cells for {classes} classes)")]
    DegenerateArrangement { cells: usize, classes: usize },

    #[error("projection did not converge after {iterations} cycles (last change {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("signed distance failed for pixel {pixel}, region {region}: {source}")]
    DistanceFailed {
        pixel: usize,
        region: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("ill-conditioned reference basis (condition number {cond:e} > {limit:e}); enable the Tikhonov fallback")]
    IllConditioned { cond: f64, limit: f64 },

    #[error("singular system in {0}; use lambda > 0")]
    Singular(&'static str),

    #[error("empty class {0}")]
    EmptyClass(usize),

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(what: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Format {
            what: what.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

use thiserror::Error;

use crate::flow::Trajectory;
use crate::point::Point;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A call was made with arguments outside its contract (dimension
    /// mismatch, step out of range, missing metadata, ...).
    #[error("usage error: {0}")]
    Usage(String),

    /// An object could not be built because its description is degenerate.
    #[error("construction error: {0}")]
    Construction(String),

    /// Dykstra (or another iterative oracle) ran out of iterations.
    #[error("convergence error after {iterations} cycles: certified tolerance {certified_tol:e}")]
    Convergence {
        iterations: usize,
        best: Point,
        certified_tol: f64,
    },

    /// Adaptive step control collapsed; the partial trajectory is kept.
    #[error("integration error at t = {t}: {message}")]
    Integration {
        t: f64,
        message: String,
        partial: Box<Trajectory>,
    },

    #[error("fit error: {0}")]
    Fit(String),

    /// Every sample fell below the degeneracy floor.
    #[error("degenerate estimate: {0}")]
    Degenerate(String),

    /// A non-finite value showed up where a finite one is required.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// Scenario validation failure, `path` is a dotted field path.
    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("oracle failure at sample {index}: {source}")]
    Oracle {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }

    pub(crate) fn construction(msg: impl Into<String>) -> Self {
        Error::Construction(msg.into())
    }

    pub fn config(path: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: msg.into(),
        }
    }

    /// True for failures of the numerical machinery, as opposed to bad input.
    pub fn is_numeric(&self) -> bool {
        match self {
            Error::Convergence { .. }
            | Error::Integration { .. }
            | Error::Fit(_)
            | Error::Degenerate(_)
            | Error::Numeric(_) => true,
            Error::Oracle { source, .. } => source.is_numeric(),
            _ => false,
        }
    }
}

use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the elssa pipelines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("invalid embedding window ({lx}, {ly}) for a {nx}x{ny} image: {reason}")]
    InvalidWindow {
        lx: usize,
        ly: usize,
        nx: usize,
        ny: usize,
        reason: &'static str,
    },

    #[error("dense materialization of {entries} entries exceeds the guard of {limit}")]
    TooLarge { entries: usize, limit: usize },

    #[error("Lanczos did not converge after {iterations} restarts ({converged} of {requested} triples converged)")]
    NoConvergence {
        iterations: usize,
        converged: usize,
        requested: usize,
    },

    #[error("rank-deficient shift system in ESPRIT (smallest/largest singular value {ratio:e})")]
    RankDeficientShift { ratio: f64 },

    #[error("ill-conditioned joint eigenbasis in 2D ESPRIT (condition number {condition:e})")]
    IllConditioned { condition: f64 },

    #[error("rank-deficient regressors: terms {first} and {second} are indistinguishable on the grid")]
    RankDeficientRegressors { first: usize, second: usize },

    #[error("nonpositive damping factor {0}")]
    NonPositiveDamping(f64),

    #[error("{0}")]
    Numerical(String),

    #[error("malformed {what} at line {line}: {reason}")]
    Parse {
        what: &'static str,
        line: usize,
        reason: String,
    },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("image codec error on {path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error("csv error on {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// True for failures of the numerical pipeline, as opposed to bad input or I/O.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NoConvergence { .. }
                | Error::RankDeficientShift { .. }
                | Error::IllConditioned { .. }
                | Error::RankDeficientRegressors { .. }
                | Error::NonPositiveDamping(_)
                | Error::Numerical(_)
        )
    }
}

// SPDX-License-Identifier: MIT OR Apache-2.0

use thiserror::Error;

/// Errors produced by the simulation and certification routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("system is not stable (spectral radius {radius})")]
    Unstable { radius: f64 },

    #[error("simulation diverged at step {step}")]
    Divergence { step: usize },

    #[error("steering direction is degenerate (norm {norm:e})")]
    DegenerateDirection { norm: f64 },

    #[error("matrix is singular or nearly singular")]
    NearSingular,

    #[error("initial error is degenerate (norm {norm:e})")]
    DegenerateInitialError { norm: f64 },

    #[error("trace is insufficient: {0}")]
    InsufficientTrace(String),

    #[error("invalid certificate: {0}")]
    InvalidCertificate(String),

    #[error("numerical solver did not converge: {0}")]
    NoConvergence(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidInput(msg.into()))
}

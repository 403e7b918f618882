// SPDX-License-Identifier: Apache-2.0

use thiserror::Error;

/// Every failure the laboratory can report.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid operator: {0}")]
    InvalidOperator(String),

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("numerical integrity violated: {0}")]
    NumericalIntegrity(String),

    #[error("integration failed at t = {time}: {reason}")]
    IntegrationFailure { time: f64, reason: String },

    #[error(
        "truncation breached at t = {time}: edge population {population:.3e} exceeds {limit:.1e} (l_max = {l_max})"
    )]
    Truncation {
        time: f64,
        population: f64,
        limit: f64,
        l_max: u32,
    },

    #[error("invalid parameter `{field}`: {message}")]
    InvalidParameter { field: String, message: String },

    #[error("eigen-solver failure: {0}")]
    EigenSolver(String),

    #[error("window [{t1}, {t_max}] is not covered by the trajectory span [{start}, {end}]")]
    Window {
        t1: f64,
        t_max: f64,
        start: f64,
        end: f64,
    },

    #[error("diagnostics: {0}")]
    Diagnostics(String),

    #[error("divergent period: energy {energy} sits on the separatrix of lam_mu = {lam_mu}")]
    DivergentPeriod { energy: f64, lam_mu: f64 },

    #[error("dimension budget exceeded: {dim} > {budget}")]
    Budget { dim: usize, budget: usize },

    #[error("{path}: {message}")]
    Config { path: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(field: &str, message: impl Into<String>) -> Error {
    Error::InvalidParameter {
        field: field.to_string(),
        message: message.into(),
    }
}

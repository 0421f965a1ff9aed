//! Error types shared across the crate.

use thiserror::Error;

/// Rejected configuration input. The message always names the offending field.
#[derive(Debug, Clone, Error)]
#[error("config error: {field}: {message}")]
pub struct ConfigError {
    pub field: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self { field: field.into(), message: message.into() }
    }
}

/// Simulation-time failure.
#[derive(Debug, Clone, Error)]
pub enum SimError {
    /// State or control signal left the finite range; names the first
    /// offending signal and the time at which it was detected.
    #[error("simulation aborted at t = {t}: signal {signal} became non-finite")]
    NonFinite { signal: String, t: f64 },
    #[error("{0}")]
    Config(#[from] ConfigError),
}

/// Parameter-synthesis failure (no admissible value exists).
#[derive(Debug, Clone, Error)]
pub enum SynthesisError {
    #[error("observer infeasible: required gain lower bound {l_min} admits no positive trigger threshold at l = {l}")]
    ObserverInfeasible { l: f64, l_min: f64 },
    #[error("no feasible gain set found: {0}")]
    NoFeasibleGains(String),
}

/// Failure while writing or reading exported run data.
#[derive(Debug, Error)]
pub enum ExportError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed run data: {0}")]
    Parse(String),
}

use ifock_core::interacting::InteractingError;
use ifock_core::moments::MomentError;
use ifock_core::noise::NoiseError;
use ifock_core::spectral::SpectralError;
use thiserror::Error;

/// Driver-level failure with a stable exit code per class.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error("degenerate shell at probe p = {p}: tangency at l = {l} (|slope| = {slope:.3e})")]
    Degenerate { p: f64, l: f64, slope: f64 },
    #[error("quadrature: {0}")]
    Quadrature(String),
    #[error("crosscheck: max pairwise relative deviation {dev:.3e} exceeds 1e-4")]
    Exceeded { dev: f64 },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Exceeded { .. } => 1,
            CliError::Config(_) | CliError::Io(_) => 2,
            CliError::Degenerate { .. } => 3,
            CliError::Quadrature(_) => 4,
        }
    }
}

/// Attaches the probe momentum under evaluation to shell degeneracies so the
/// report can localize the tangency.
pub fn from_spectral(e: SpectralError, p: f64) -> CliError {
    match e {
        SpectralError::DegenerateShell { l, slope } => CliError::Degenerate { p, l, slope },
        SpectralError::Quadrature(q) => CliError::Quadrature(q.to_string()),
        other => CliError::Config(other.to_string()),
    }
}

pub fn from_moment(e: MomentError, p: f64) -> CliError {
    match e {
        MomentError::Spectral(s) => from_spectral(s, p),
        MomentError::Quad(q) => CliError::Quadrature(q.to_string()),
        other => CliError::Config(other.to_string()),
    }
}

pub fn from_noise(e: NoiseError, p: f64) -> CliError {
    match e {
        NoiseError::Spectral(s) => from_spectral(s, p),
        other => CliError::Config(other.to_string()),
    }
}

pub fn from_interacting(e: InteractingError, p: f64) -> CliError {
    match e {
        InteractingError::Spectral(s) => from_spectral(s, p),
        other => CliError::Config(other.to_string()),
    }
}

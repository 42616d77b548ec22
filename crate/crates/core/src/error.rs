use std::path::PathBuf;

use serde::Serialize;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Snapshot of the state at the moment an integration step produced
/// non-finite amplitudes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NanDiagnostic {
    pub step: u64,
    pub time: f64,
    pub dt: f64,
    pub norm_squared: f64,
    pub non_finite_points: usize,
    pub max_abs_hermitian_potential: f64,
    pub max_localization_potential: f64,
    pub positions: Vec<Vec<f64>>,
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("invalid specification: {0}")]
    Spec(String),

    #[error("config parse error{}: {message}", line.map(|l| format!(" at line {l}")).unwrap_or_default())]
    ConfigParse { message: String, line: Option<usize> },

    #[error("config validation error: {0}")]
    ConfigValidation(String),

    #[error("integration failure at step {} (t = {}): non-finite amplitudes", .0.step, .0.time)]
    Integration(Box<NanDiagnostic>),

    #[error("insufficient data: {0}")]
    Insufficient(String),

    #[error("checkpoint format error: {0}")]
    Checkpoint(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Short machine-readable category used in CLI error payloads.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Domain(_) => "domain",
            Error::Precondition(_) => "precondition",
            Error::Unsupported(_) => "unsupported",
            Error::Spec(_) => "spec",
            Error::ConfigParse { .. } => "config-parse",
            Error::ConfigValidation(_) => "config-validation",
            Error::Integration(_) => "integration",
            Error::Insufficient(_) => "insufficient-data",
            Error::Checkpoint(_) => "checkpoint",
            Error::Io { .. } => "io",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

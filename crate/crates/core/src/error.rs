use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Broad failure classes, used by front ends to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Numeric,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("invalid data{}: {message}", row.map(|r| format!(" at row {r}")).unwrap_or_default())]
    Data { row: Option<usize>, message: String },

    #[error("log argument {value} is not positive at I = {i_cell} A/m², T = {temperature} K, P = {pressure} bar")]
    LogDomain {
        value: f64,
        i_cell: f64,
        temperature: f64,
        pressure: f64,
    },

    #[error("{0}")]
    Domain(String),

    #[error("integration failed at t = {t} s: {reason}")]
    Integrator { t: f64, reason: String },

    #[error("evaluator failed at parameter point {point:?}: {source}")]
    Evaluator {
        point: Vec<f64>,
        #[source]
        source: Box<Error>,
    },

    #[error("collocation system is rank deficient ({rank} of {basis} basis terms resolved); try a different grid level")]
    RankDeficient { rank: usize, basis: usize },

    #[error("dimension {dim} value {value} lies outside [{lo}, {hi}]")]
    OutOfBounds {
        dim: usize,
        value: f64,
        lo: f64,
        hi: f64,
    },

    #[error("gradient is unavailable for a direct-simulation forward model; use the random_walk proposal")]
    UnsupportedGradient,

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error in {context}: {source}")]
    Json {
        context: String,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }

    pub fn data(row: Option<usize>, message: impl Into<String>) -> Self {
        Error::Data {
            row,
            message: message.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Config { .. } | Error::UnsupportedGradient | Error::Json { .. } => {
                ErrorKind::Config
            }
            Error::Data { .. } | Error::Io { .. } | Error::LengthMismatch { .. } => ErrorKind::Data,
            Error::Evaluator { source, .. } => source.kind(),
            _ => ErrorKind::Numeric,
        }
    }
}

//! Error types shared across the crate.

use thiserror::Error;

/// A single rejected parameter, with the key path it came from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub key: String,
    pub message: String,
}

impl Violation {
    pub fn new(key: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            key: key.into(),
            message: message.into(),
        }
    }
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.key, self.message)
    }
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
}

#[derive(Debug, Error, PartialEq)]
pub enum GridError {
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),
    #[error("interval [{k}, {k}+1] lies outside the domain [{lo}, {hi}]")]
    IntervalOutOfRange { k: i64, lo: f64, hi: f64 },
}

#[derive(Debug, Error, PartialEq)]
pub enum SolverError {
    #[error("tridiagonal system not strictly diagonally dominant at row {row}")]
    NotDiagonallyDominant { row: usize },
    #[error("{field} lost positivity at t = {t} (min {min})")]
    Positivity {
        field: &'static str,
        t: f64,
        min: f64,
    },
    #[error("step rejected {halvings} times at t = {t}: {reason}")]
    RetriesExhausted {
        t: f64,
        halvings: u32,
        reason: String,
    },
    #[error("explicit reference run unstable at t = {t}: {reason}")]
    Unstable { t: f64, reason: String },
    #[error(transparent)]
    Grid(#[from] GridError),
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config syntax error: {0}")]
    Syntax(String),
    #[error("config validation failed:\n{}", format_violations(.0))]
    Invalid(Vec<Violation>),
    #[error("cannot read profile {path}: {reason}")]
    Profile { path: String, reason: String },
}

fn format_violations(v: &[Violation]) -> String {
    v.iter()
        .map(|v| format!("  - {v}"))
        .collect::<Vec<_>>()
        .join("\n")
}

#[derive(Debug, Error)]
pub enum DiagnosticsError {
    #[error("trajectory too short: need at least {need} snapshots, got {got}")]
    TooShort { need: usize, got: usize },
    #[error("state invalid for diagnostics: {0}")]
    InvalidState(String),
    #[error(transparent)]
    Grid(#[from] GridError),
}

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("incompatible trajectories: {0}")]
    Incompatible(String),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Error)]
pub enum TrajectoryIoError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("malformed trajectory file: {0}")]
    Format(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

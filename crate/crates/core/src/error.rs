use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the simulation and analysis pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid lattice: {0}")]
    InvalidGeometry(String),

    #[error("invalid spin configuration: {0}")]
    InvalidConfiguration(String),

    #[error("site {site} out of range for lattice of {n} sites")]
    SiteOutOfRange { site: usize, n: usize },

    #[error("invalid device curves: {0}")]
    InvalidCurves(String),

    #[error("invalid control program: {0}")]
    InvalidProgram(String),

    #[error("invalid field path: {0}")]
    InvalidPath(String),

    #[error("classical limit: transverse field {bx} GHz is below the floor {floor} GHz")]
    ClassicalLimit { bx: f64, floor: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("lattice of {n} sites is too large for dense propagation (max {max})")]
    TooLarge { n: usize, max: usize },

    #[error("step-size failure at t = {t} us: step {step} us fell below minimum while error {error:e} exceeded tolerance")]
    StepSizeFailure { t: f64, step: f64, error: f64 },

    #[error("ensemble mismatch: {0}")]
    EnsembleMismatch(String),

    #[error("no estimate: {0}")]
    NoEstimate(String),

    #[error("branch resolution failed: {0}")]
    NonUnimodal(String),

    #[error("missing input: {0}")]
    MissingInput(String),

    #[error("replica {replica} at t = {t} us: {source}")]
    Replica {
        replica: usize,
        t: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("incompatible runs: {0}")]
    Incompatible(String),

    #[error("verification failed for {path}: {reason}")]
    Verification { path: PathBuf, reason: String },

    #[error("config: {0}")]
    Config(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

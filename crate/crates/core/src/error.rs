use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the bridge solvers, simulator and I/O helpers.
#[derive(Debug, Error)]
pub enum BridgeError {
    #[error("reversion rate must be positive, got {0}")]
    NonPositiveReversion(f64),
    #[error("source rate must be nonnegative, got {value} at t = {t}")]
    NegativeSource { t: f64, value: f64 },
    #[error("volatility must be positive, got {value} at t = {t}")]
    NonPositiveVolatility { t: f64, value: f64 },
    #[error("coefficient `{name}` has a non-finite sample")]
    UnboundedCoefficient { name: &'static str },
    #[error("malformed coefficient curve: {0}")]
    InvalidCurve(String),
    #[error("time {0} lies outside [0, 1]")]
    OutOfDomain(f64),
    #[error("time grid needs at least 10 steps, got {0}")]
    DegenerateGrid(usize),
    #[error("ambiguity-aversion parameter must be finite and nonnegative, got {0}")]
    InvalidPsi(f64),
    #[error("fixed-point iteration did not converge after {iterations} iterations (last update {last_update:e})")]
    NoConvergence { iterations: usize, last_update: f64 },
    #[error("integration became unstable at t = {t}; refine the time grid")]
    Unstable { t: f64 },
    #[error("inconsistent input: {0}")]
    InconsistentInput(String),
    #[error("target relative entropy {target} is not reached on [0, {psi_max}] (max {reached})")]
    NotBracketed {
        target: f64,
        psi_max: f64,
        reached: f64,
    },
    #[error("distorted simulation requires a Riccati solution")]
    MissingRiccati,
    #[error("Riccati solution blew up; no distorted dynamics exist at this psi")]
    BlowUpInput,
    #[error("benchmark ensembles carry no entropy samples")]
    BenchmarkEnsemble,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },
    #[error("{0}: no records")]
    EmptyInput(PathBuf),
    #[error("day `{day}` has non-increasing times at line {line}")]
    NonMonotoneTime { day: String, line: u64 },
    #[error("only {usable} usable bins, need at least 4")]
    DegenerateData { usable: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = BridgeError> = std::result::Result<T, E>;

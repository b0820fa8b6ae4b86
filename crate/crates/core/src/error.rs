use std::fmt;

use thiserror::Error;

/// Which member of a coupled pair produced an error.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PathSide {
    Fine,
    Coarse,
}

impl fmt::Display for PathSide {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PathSide::Fine => f.write_str("fine"),
            PathSide::Coarse => f.write_str("coarse"),
        }
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("unknown preset `{name}` (valid: {valid})")]
    UnknownPreset { name: String, valid: String },

    #[error("invalid problem: {0}")]
    InvalidProblem(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("level {0} out of range (0..=30)")]
    LevelOutOfRange(u32),

    #[error("cannot coarsen a level-0 noise grid")]
    CoarsenLevelZero,

    #[error("drift evaluated to a non-finite value at probe point {point:?}")]
    NonFiniteDrift { point: Vec<f64> },

    #[error("implicit step not contractive: h*c = {h}*{c} >= 1")]
    NonContractive { h: f64, c: f64 },

    #[error("implicit solve diverged from {start:?} (best residual {residual:e})")]
    SolverDiverged { start: Vec<f64>, residual: f64 },

    #[error("path exploded to {value:e}")]
    PathExploded { value: f64 },

    #[error("at step {step}: {source}")]
    AtStep {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{side} path: {source}")]
    Coupled {
        side: PathSide,
        #[source]
        source: Box<Error>,
    },

    #[error("payoff evaluated on an empty path")]
    EmptyPath,

    #[error("every sampled path failed at level {level} ({attempts} attempts)")]
    AllPathsFailed { level: u32, attempts: u64 },

    #[error("io: {0}")]
    Io(String),

    #[error("csv: {0}")]
    Csv(String),
}

impl Error {
    /// Strips step/side annotations.
    pub fn root(&self) -> &Error {
        match self {
            Error::AtStep { source, .. } | Error::Coupled { source, .. } => source.root(),
            e => e,
        }
    }

    /// True for explicit-scheme explosions, which the MLMC driver may count and skip.
    pub fn is_explosion(&self) -> bool {
        matches!(self.root(), Error::PathExploded { .. })
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Csv(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

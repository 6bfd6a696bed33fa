use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("empty point set")]
    EmptyInput,
}

#[derive(Debug, Error)]
pub enum HypothesisError {
    #[error("component {component} in frame {frame}: no ellipse can be fit at the root")]
    DegenerateComponent { frame: u32, component: usize },
    #[error("bad mask {path}: {reason}")]
    BadMask { path: PathBuf, reason: String },
}

#[derive(Debug, Error)]
pub enum EventsError {
    #[error("training data contains a single class")]
    SingleClass,
    #[error("no training samples")]
    Empty,
    #[error("feature vector has {got} entries, schema expects {expected}")]
    Schema { expected: usize, got: usize },
    #[error("malformed training data at line {line}: {reason}")]
    Csv { line: usize, reason: String },
    #[error("model schema version {found} is not supported (expected {expected})")]
    ModelVersion { expected: u32, found: u32 },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IlpError {
    #[error("probability {value} for {what} is outside (0, 1)")]
    InvalidProbability { what: String, value: f64 },
    #[error("model has {0} variables; exhaustive search is limited to 25")]
    TooLarge(usize),
    #[error("linear program is infeasible")]
    Infeasible,
    #[error("probability table does not match the graph: {0}")]
    Shape(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LineageError {
    #[error("flow conservation violated at vertex {vertex}: inflow {inflow}, outflow {outflow}")]
    InfeasibleFlow {
        vertex: usize,
        inflow: usize,
        outflow: usize,
    },
    #[error("solution is not binary at variable {0}")]
    NotBinary(usize),
    #[error("malformed track file line {line}: {reason}")]
    Parse { line: usize, reason: String },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("frame {0} is referenced by a track but has no mask")]
    FrameMismatch(u32),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthError {
    #[error("invalid synthetic config: {0}")]
    ConfigInvalid(String),
}

/// Crate-level error for the pipeline drivers.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Hypothesis(#[from] HypothesisError),
    #[error(transparent)]
    Events(#[from] EventsError),
    #[error(transparent)]
    Ilp(#[from] IlpError),
    #[error(transparent)]
    Lineage(#[from] LineageError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("config: {0}")]
    Config(String),
    #[error("no masks found in {0}")]
    NoMasks(PathBuf),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

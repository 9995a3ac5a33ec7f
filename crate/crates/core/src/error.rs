use std::path::PathBuf;

use thiserror::Error;

/// Failures raised by the numerical kernels.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("shape mismatch: expected {expected_nx}x{expected_nv} cells, got {nx}x{nv}")]
    ShapeMismatch {
        expected_nx: usize,
        expected_nv: usize,
        nx: usize,
        nv: usize,
    },
    #[error("weight matrices have order {got}, model expects K = {expected}")]
    BasisOrder { expected: usize, got: usize },
    #[error("non-finite value in {what} at cell ({i}, {j})")]
    NonFinite {
        what: &'static str,
        i: usize,
        j: usize,
    },
    #[error("non-finite weight {what}[{i}][{j}]")]
    NonFiniteWeight {
        what: &'static str,
        i: usize,
        j: usize,
    },
    #[error(
        "initial density vanishes on every cell center; grid too coarse to resolve the speed bump"
    )]
    EmptyInitialDensity,
    #[error("negative Rusanov speed bound {0}")]
    NegativeSpeedBound(f64),
    #[error("ensemble is empty")]
    EmptyEnsemble,
    #[error("speed reflection did not converge for agent {agent} (v = {v})")]
    ReflectionDiverged { agent: usize, v: f64 },
    #[error("continuity check needs at least 3 profiles, got {0}")]
    TooFewProfiles(usize),
    #[error("profile times are not uniformly spaced by dt = {dt} (gap {gap} at index {index})")]
    MismatchedTimes { dt: f64, gap: f64, index: usize },
}

/// Errors from reading or writing the key=value configuration file.
#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: duplicate key `{key}`")]
    DuplicateKey { line: usize, key: String },
}

/// Errors surfaced by the output writers.
#[derive(Debug, Error)]
#[error("failed to write {path}: {source}")]
pub struct OutputError {
    pub path: PathBuf,
    #[source]
    pub source: std::io::Error,
}

impl OutputError {
    pub fn new(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self {
            path: path.into(),
            source,
        }
    }
}

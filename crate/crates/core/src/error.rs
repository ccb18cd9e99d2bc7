use std::io;
use std::path::PathBuf;

use thiserror::Error;

/// Problems found while reading or validating an experiment definition.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("malformed YAML: {0}")]
    Yaml(String),
    #[error("parameter `{name}`: lower > upper ({lower} > {upper})")]
    InvertedRange { name: String, lower: f64, upper: f64 },
    #[error("parameter `{name}`: integer bounds must be whole numbers ({lower}, {upper})")]
    NonIntegralBound { name: String, lower: f64, upper: f64 },
    #[error("parameter `{name}`: bounds must be finite")]
    NonFiniteBound { name: String },
    #[error("duplicate parameter name `{0}`")]
    DuplicateName(String),
    #[error("parameter name `{0}` is not an identifier")]
    InvalidName(String),
    #[error("parameter `{0}`: searchable=false requires a fixed value (user_preference)")]
    MissingFixedValue(String),
    #[error("parameter `{name}`: fixed value {value} outside [{lower}, {upper}]")]
    FixedOutOfBounds {
        name: String,
        value: f64,
        lower: f64,
        upper: f64,
    },
    #[error("parameter `{name}`: fixed value {value} is not a whole number")]
    NonIntegralFixed { name: String, value: f64 },
    #[error("unknown optimizer `{0}` (expected random, tpe or pso)")]
    UnknownOptimizer(String),
    #[error("unknown parameter `{0}`")]
    UnknownParameter(String),
    #[error("invalid study setting: {0}")]
    InvalidStudy(String),
    #[error("evaluator not found: {0}")]
    EvaluatorNotFound(String),
}

/// Failures of the persistent trial journal.
#[derive(Debug, Error)]
pub enum StoreError {
    #[error("journal I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("not a study journal: {0}")]
    NotAJournal(PathBuf),
    #[error("study already exists at {0} (resume it instead)")]
    AlreadyExists(PathBuf),
    #[error("corrupted journal record at line {line} (after seq {after_seq}): {reason}")]
    Corrupt {
        line: usize,
        after_seq: u64,
        reason: String,
    },
    #[error("study sealed: budget already exhausted")]
    Sealed,
    #[error("timed out acquiring journal lock {0}")]
    LockTimeout(PathBuf),
    #[error("lifecycle violation: {0}")]
    Lifecycle(String),
    #[error("space hash mismatch: journal has {journal}, configuration has {config}")]
    SpaceMismatch { journal: String, config: String },
}

impl StoreError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        StoreError::Io {
            path: path.into(),
            source,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SamplerError {
    #[error("PSO requires at least one searchable parameter")]
    EmptySpace,
    #[error("unknown trial id {0}")]
    UnknownTrial(u64),
    #[error("trial {0} already observed with a different outcome")]
    ConflictingObservation(u64),
    #[error("generation evaluation must cover particles 0..{expected} exactly once: {reason}")]
    IncompleteGeneration { expected: usize, reason: String },
    #[error("journal state cannot be restored into the sampler: {0}")]
    Restore(String),
}

/// Top-level error returned by study-level operations.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Sampler(#[from] SamplerError),
    #[error("{0}")]
    Other(String),
}

impl Error {
    /// Process exit status used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Store(StoreError::SpaceMismatch { .. }) => 2,
            Error::Store(_) => 3,
            Error::Sampler(_) | Error::Other(_) => 1,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

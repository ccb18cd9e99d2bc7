//! Config-driven black-box optimization over external evaluator programs.

pub mod bench;
pub mod config;
pub mod error;
mod float_repr;
pub mod orchestrator;
pub mod protocol;
pub mod pruning;
pub mod report;
pub mod sampler;
pub mod space;
pub mod store;

pub use config::{parse_config, to_yaml, Direction, Optimizer, PruningConfig, PsoConfig, StudyConfig, TpeConfig};
pub use error::{ConfigError, Error, Result, SamplerError, StoreError};
pub use space::{decode_value, Category, Kind, ParamVector, ParameterSpec, SearchSpace};
pub use orchestrator::{
    resume_study, resume_study_with, resume_with_config, run_study, run_study_with, Evaluator, FnEvaluator,
    ProcessEvaluator, RunOptions, StudyReport, StudyStatus, TrialContext,
};
pub use protocol::{Decision, Envelope, Outcome};
pub use store::{StudyState, Trial, TrialState, TrialStore};

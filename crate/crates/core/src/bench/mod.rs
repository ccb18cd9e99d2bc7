//! Desk-scale objectives for exercising optimizers: classic test functions
//! and a training-curve surrogate over the twelve-parameter agent space.

pub mod child;
pub mod functions;
pub mod suites;
pub mod surrogate;

pub use functions::{branin, rastrigin, sphere, TestFunction};
pub use surrogate::{decode_activation, table3_config, table3_space, Activation, SurrogateCurveModel, NAS_PARAMS, TABLE3_YAML};

use crate::error::ConfigError;
use crate::orchestrator::{Evaluator, TrialContext};
use crate::protocol::{Decision, Outcome};
use crate::space::{ParameterSpec, SearchSpace};

/// Coordinate names used by [`function_space`]: `x0`, `x1`, ...
pub fn coordinate_name(i: usize) -> String {
    format!("x{i}")
}

/// Float space with the function's default bounds.
pub fn function_space(function: TestFunction) -> SearchSpace {
    bounded_space(&function.bounds()).expect("function bounds are valid")
}

pub fn bounded_space(bounds: &[(f64, f64)]) -> Result<SearchSpace, ConfigError> {
    SearchSpace::new(
        bounds
            .iter()
            .enumerate()
            .map(|(i, &(lo, hi))| ParameterSpec::float(coordinate_name(i), lo, hi))
            .collect(),
    )
}

/// Evaluates a test function in-process; the parameters' declaration order
/// gives the coordinate order.
#[derive(Debug, Clone, Copy)]
pub struct FunctionEvaluator(pub TestFunction);

impl Evaluator for FunctionEvaluator {
    fn evaluate(&self, trial: &TrialContext, _report: &mut dyn FnMut(u64, f64) -> Decision) -> Outcome {
        let x: Vec<f64> = trial.params.values().collect();
        match self.0.eval(&x) {
            Ok(objective) => Outcome::Completed { objective, extra_info: None },
            Err(e) => Outcome::failed(e),
        }
    }
}

/// Runs the surrogate curve in-process. Envelope hints override the
/// model's step count and report spacing.
#[derive(Debug, Clone, Default)]
pub struct SurrogateEvaluator(pub SurrogateCurveModel);

impl Evaluator for SurrogateEvaluator {
    fn evaluate(&self, trial: &TrialContext, report: &mut dyn FnMut(u64, f64) -> Decision) -> Outcome {
        let mut model = self.0.clone();
        if let Some(n) = trial.envelope.max_steps {
            model.n_steps = n;
        }
        model.run(&trial.params, trial.seed, trial.envelope.report_every.unwrap_or(1), report)
    }
}

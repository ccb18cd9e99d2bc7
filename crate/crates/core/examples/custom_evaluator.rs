//! An in-process evaluator implementing the `Evaluator` trait, with
//! intermediate reports, early stopping and extra metadata, then a CSV
//! export of the study.

use std::sync::Arc;

use forge::{
    report, run_study_with, Decision, Evaluator, Outcome, ParameterSpec, PruningConfig, RunOptions, SearchSpace,
    StudyConfig, TrialContext,
};
use serde_json::json;

/// Pretends to train: accuracy climbs toward a ceiling set by the
/// parameters.
struct ToyTrainer {
    epochs: u64,
}

impl Evaluator for ToyTrainer {
    fn evaluate(&self, trial: &TrialContext, report: &mut dyn FnMut(u64, f64) -> Decision) -> Outcome {
        let lr = trial.params.get("lr").unwrap();
        let width = trial.params.get("width").unwrap();
        let ceiling = 0.95 - 0.4 * (lr.log10() + 2.5).powi(2) / 4.0 - 0.002 * (width - 96.0).abs();
        let mut accuracy = 0.0;
        for epoch in 1..=self.epochs {
            accuracy = ceiling * (1.0 - (-(epoch as f64) / 3.0).exp());
            match report(epoch, accuracy) {
                Decision::Continue => {}
                Decision::Stop | Decision::Abort => return Outcome::Pruned { step: epoch },
            }
        }
        let mut info = serde_json::Map::new();
        info.insert("epochs".into(), json!(self.epochs));
        info.insert("ceiling".into(), json!(ceiling));
        Outcome::Completed { objective: accuracy, extra_info: Some(info) }
    }
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let space = SearchSpace::new(vec![ParameterSpec::float("lr", 1e-4, 1e-1), ParameterSpec::integer("width", 32, 256)])?;
    let mut config = StudyConfig {
        optimizer: forge::Optimizer::Tpe,
        n_trials: 30,
        workers: 3,
        pruning: Some(PruningConfig { enabled: true, min_completed_trials: 5, min_reports: 3 }),
        study_path: dir.path().to_path_buf(),
        ..StudyConfig::default()
    };
    config.tpe.n_startup_trials = 10;

    let result = run_study_with(&space, &config, Arc::new(ToyTrainer { epochs: 12 }), &RunOptions::default())?;
    print!("{}", report::to_csv(&result.state));
    let best = result.best().expect("a completed trial");
    println!("best trial {}: accuracy {:.4}, info {:?}", best.trial_id, best.objective.unwrap(), best.extra_info);
    Ok(())
}

//! Resume a study whose journal was left behind by a dead engine.
//!
//! The journal is written by hand here: two trials finished, a third was
//! claimed by a worker that never came back. Resuming requeues the orphan
//! and spends the rest of the budget.

use std::sync::Arc;

use forge::bench::{function_space, FunctionEvaluator, TestFunction};
use forge::sampler::{sample_random, trial_rng};
use forge::store::{Event, TrialStore};
use forge::{resume_study_with, Direction, RunOptions, StudyConfig, TrialState};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let space = function_space(TestFunction::Branin);
    let config = StudyConfig { direction: Direction::Minimize, n_trials: 12, seed: 4, ..StudyConfig::default() };

    {
        let mut store = TrialStore::create(dir.path(), &space, &config, "engine-1")?;
        for trial_id in 0..3 {
            let params = sample_random(&space, &mut trial_rng(config.seed, trial_id));
            let x: Vec<f64> = params.values().collect();
            store.append(Event::TrialCreated { trial_id, params, generation: None })?;
            store.append(Event::TrialClaimed { trial_id })?;
            if trial_id < 2 {
                let objective = forge::bench::branin(&x)?;
                store.append(Event::TrialCompleted { trial_id, objective, extra_info: None })?;
            }
        }
        let state = store.state();
        println!("left behind: {} trials, {} terminal", state.trials.len(), state.terminal_count());
    }

    let report = resume_study_with(dir.path(), Arc::new(FunctionEvaluator(TestFunction::Branin)), &RunOptions::default())?;
    println!("resumed: {} new terminal trials", report.new_terminals);
    for trial in report.trials() {
        let attempts = if trial.attempts > 1 { format!(" (attempt {})", trial.attempts) } else { String::new() };
        println!("  trial {:>2} {:<9} {:.4}{attempts}", trial.trial_id, trial.state.as_str(), trial.objective.unwrap_or(f64::NAN));
    }
    assert_eq!(report.count(TrialState::Completed), 12);

    // a second resume finds nothing to do
    let again = resume_study_with(dir.path(), Arc::new(FunctionEvaluator(TestFunction::Branin)), &RunOptions::default())?;
    println!("second resume: {} new terminal trials", again.new_terminals);
    Ok(())
}

//! Four workers driving an external shell-script evaluator over the line
//! protocol.
//!
//! The script reads its parameters from the envelope file, reports a short
//! learning curve and stops early when told to.

use std::os::unix::fs::PermissionsExt;
use std::time::Instant;

use forge::{report, run_study, ParameterSpec, PruningConfig, RunOptions, SearchSpace, StudyConfig};

const SCRIPT: &str = r#"#!/bin/sh
# x and y from the envelope; objective -(x-1)^2 - (y+2)^2 approached over 5 steps
x=$(sed -n 's/.*"x": *\([-0-9.e]*\).*/\1/p' "$FORGE_PARAMS_FILE")
y=$(sed -n 's/.*"y": *\([-0-9.e]*\).*/\1/p' "$FORGE_PARAMS_FILE")
target=$(awk -v x="$x" -v y="$y" 'BEGIN { print -((x-1)^2 + (y+2)^2) }')
for step in 1 2 3 4 5; do
  value=$(awk -v t="$target" -v s="$step" 'BEGIN { print t - 10/s }')
  echo "REPORT $step $value"
  read reply
  [ "$reply" = "STOP" ] && exit 0
  sleep 0.02
done
echo "INFO {\"steps\": 5}"
echo "FINAL $target"
"#;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let script = dir.path().join("evaluate.sh");
    std::fs::write(&script, SCRIPT)?;
    std::fs::set_permissions(&script, std::fs::Permissions::from_mode(0o755))?;

    let space = SearchSpace::new(vec![ParameterSpec::float("x", -5.0, 5.0), ParameterSpec::float("y", -5.0, 5.0)])?;
    let config = StudyConfig {
        optimizer: forge::Optimizer::Random,
        n_trials: 40,
        workers: 4,
        pruning: Some(PruningConfig { enabled: true, min_completed_trials: 8, min_reports: 2 }),
        evaluator_command: Some(script.display().to_string()),
        study_path: dir.path().join("study"),
        ..StudyConfig::default()
    };

    let started = Instant::now();
    let result = run_study(&space, &config, &RunOptions::default())?;
    println!("{} trials with 4 workers in {:.2}s", result.state.trials.len(), started.elapsed().as_secs_f64());
    for state in [forge::TrialState::Completed, forge::TrialState::Pruned, forge::TrialState::Failed] {
        println!("  {:<9} {}", state.as_str(), result.count(state));
    }
    if let Some(best) = report::best_trial(&result.state) {
        println!("best:\n{}", serde_json::to_string_pretty(&best)?);
    }
    Ok(())
}

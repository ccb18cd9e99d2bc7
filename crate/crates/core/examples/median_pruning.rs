//! Median pruning on learning curves: the same TPE study with and without
//! a pruner, comparing evaluation work and the best result.

use forge::bench::suites::run_surrogate_study;
use forge::bench::{table3_space, SurrogateCurveModel};
use forge::{Optimizer, PruningConfig, TrialState};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let space = table3_space();
    let model = SurrogateCurveModel::default();
    // looser gates than the defaults so the effect shows on a short study
    let pruning = PruningConfig { enabled: true, min_completed_trials: 10, min_reports: 20 };

    for (label, pruning) in [("no pruning", None), ("median pruning", Some(pruning))] {
        let dir = tempfile::tempdir()?;
        let report = run_surrogate_study(&space, Optimizer::Tpe, 80, 1, pruning, &model, dir.path())?;
        let reports: usize = report.trials().map(|t| t.reports.len()).sum();
        let pruned: Vec<String> = report
            .trials()
            .filter(|t| t.state == TrialState::Pruned)
            .map(|t| format!("{}@{}", t.trial_id, t.pruned_step.unwrap_or(0)))
            .collect();
        println!(
            "{label:<15} reports {reports:>5}  pruned {:>2}  best {:.2}",
            pruned.len(),
            report.state.best.map_or(f64::NAN, |b| b.1)
        );
        if !pruned.is_empty() {
            println!("  stopped (trial@step): {}", pruned.join(" "));
        }
    }
    Ok(())
}

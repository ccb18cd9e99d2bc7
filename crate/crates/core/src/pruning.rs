//! Median pruning of trials from their intermediate reports.
//!
//! Reports are aligned by position within each trial (first report against
//! first report, and so on). A trial is stopped when its value at a given
//! position is strictly worse than the median of the completed trials'
//! values at that position, once enough trials have completed and the trial
//! has reported enough times.

use serde::{Deserialize, Serialize};

use crate::config::{Direction, PruningConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub step: u64,
    #[serde(with = "crate::float_repr")]
    pub value: f64,
}

/// Ordered intermediate reports of one trial.
pub type ReportSeries = [Report];

/// Lower-middle order statistic; `None` for an empty set.
pub fn lower_median(mut values: Vec<f64>) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    Some(values[(values.len() - 1) / 2])
}

/// Decides whether the trial should stop at its report with label `step`.
///
/// `history` holds the report series of completed trials only.
pub fn should_prune<S: AsRef<ReportSeries>>(
    trial_reports: &ReportSeries,
    step: u64,
    history: &[S],
    cfg: &PruningConfig,
    direction: Direction,
) -> bool {
    if !cfg.enabled || history.len() < cfg.min_completed_trials {
        return false;
    }
    let Some(index) = trial_reports.iter().position(|r| r.step == step) else {
        return false;
    };
    if index + 1 < cfg.min_reports {
        return false;
    }
    // compare on a "higher is better" scale; non-finite values score worst
    let scores: Vec<f64> = history
        .iter()
        .filter_map(|series| series.as_ref().get(index))
        .map(|r| direction.score(r.value))
        .collect();
    match lower_median(scores) {
        Some(median) => direction.score(trial_reports[index].value) < median,
        None => false,
    }
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    fn series(values: &[f64]) -> Vec<Report> {
        values
            .iter()
            .enumerate()
            .map(|(i, &value)| Report { step: (i as u64 + 1) * 10, value })
            .collect()
    }

    /// Independent median: the element with as many strictly-smaller values
    /// as the lower-middle rank requires.
    fn median_by_rank(values: &[f64]) -> f64 {
        let rank = (values.len() - 1) / 2;
        let mut candidates: Vec<f64> = values
            .iter()
            .copied()
            .filter(|v| {
                let below = values.iter().filter(|w| *w < v).count();
                let equal = values.iter().filter(|w| *w == v).count();
                below <= rank && rank < below + equal
            })
            .collect();
        candidates.dedup();
        candidates[0]
    }

    fn history_with_value_at(k: usize, finals: &[f64], n_completed: usize) -> Vec<Vec<Report>> {
        (0..n_completed)
            .map(|i| {
                let mut v = vec![100.0; k + 1];
                v[k] = finals[i % finals.len()];
                series(&v)
            })
            .collect()
    }

    const CFG: PruningConfig = PruningConfig { enabled: true, min_completed_trials: 50, min_reports: 48 };

    #[test]
    fn median_oracle_agrees() {
        assert_eq!(lower_median(vec![10.0, 20.0, 30.0, 40.0, 50.0]), Some(30.0));
        assert_eq!(lower_median(vec![4.0, 1.0, 3.0, 2.0]), Some(2.0));
        assert_eq!(median_by_rank(&[10.0, 20.0, 30.0, 40.0, 50.0]), 30.0);
        assert_eq!(lower_median(vec![]), None);
    }

    #[test]
    fn gate_on_completed_trials() {
        let history = history_with_value_at(47, &[100.0], 49);
        let trial = series(&vec![-1e9; 48]);
        assert!(!should_prune(&trial, 480, &history, &CFG, Direction::Maximize));
    }

    #[test]
    fn gate_on_report_count() {
        let history = history_with_value_at(46, &[100.0], 60);
        let trial = series(&vec![-1e9; 47]);
        assert!(!should_prune(&trial, 470, &history, &CFG, Direction::Maximize));
    }

    #[test]
    fn strictly_worse_than_median() {
        // 60 completed trials whose 48th reports are {10, 20, 30, 40, 50}
        let finals = [10.0, 20.0, 30.0, 40.0, 50.0];
        let history = history_with_value_at(47, &finals, 60);
        let at_48: Vec<f64> = history.iter().map(|s| s[47].value).collect();
        assert_eq!(median_by_rank(&at_48), 30.0);

        let mut values = vec![0.0; 48];
        values[47] = 25.0;
        assert!(should_prune(&series(&values), 480, &history, &CFG, Direction::Maximize));
        values[47] = 30.0;
        assert!(!should_prune(&series(&values), 480, &history, &CFG, Direction::Maximize));
    }

    #[test]
    fn disabled_or_no_basis() {
        let history = history_with_value_at(47, &[10.0], 60);
        let trial = series(&vec![0.0; 60]);
        let off = PruningConfig { enabled: false, ..CFG };
        assert!(!should_prune(&trial, 480, &history, &off, Direction::Maximize));
        // nobody reported a 60th value
        assert!(!should_prune(&trial, 600, &history, &CFG, Direction::Maximize));
        // unknown step label
        assert!(!should_prune(&trial, 481, &history, &CFG, Direction::Maximize));
    }

    #[test]
    fn minimize_prunes_high_values() {
        let history = history_with_value_at(1, &[1.0, 2.0, 3.0], 3);
        let cfg = PruningConfig { enabled: true, min_completed_trials: 3, min_reports: 2 };
        assert!(should_prune(&series(&[0.0, 2.5]), 20, &history, &cfg, Direction::Minimize));
        assert!(!should_prune(&series(&[0.0, 2.0]), 20, &history, &cfg, Direction::Minimize));
        assert!(should_prune(&series(&[0.0, f64::NAN]), 20, &history, &cfg, Direction::Minimize));
    }

    fn arb_history() -> impl Strategy<Value = Vec<Vec<Report>>> {
        prop::collection::vec(prop::collection::vec(-100.0f64..100.0, 0..6), 0..12)
            .prop_map(|h| h.iter().map(|v| series(v)).collect())
    }

    proptest! {
        #[test]
        fn total_and_matches_oracle(history in arb_history(), trial in prop::collection::vec(-100.0f64..100.0, 1..6), min_done in 0usize..4, min_rep in 1usize..4) {
            let cfg = PruningConfig { enabled: true, min_completed_trials: min_done, min_reports: min_rep };
            let trial = series(&trial);
            for (index, report) in trial.iter().enumerate() {
                let got = should_prune(&trial, report.step, &history, &cfg, Direction::Maximize);
                let peers: Vec<f64> = history.iter().filter_map(|s| s.get(index)).map(|r| r.value).collect();
                let expected = history.len() >= min_done
                    && index + 1 >= min_rep
                    && !peers.is_empty()
                    && report.value < median_by_rank(&peers);
                prop_assert_eq!(got, expected);
            }
        }

        #[test]
        fn monotone_gate(history in arb_history(), v in -100.0f64..100.0, bump in 0.0f64..50.0) {
            let cfg = PruningConfig { enabled: true, min_completed_trials: 0, min_reports: 1 };
            let low = series(&[v]);
            let high = series(&[v + bump]);
            if !should_prune(&low, 10, &history, &cfg, Direction::Maximize) {
                prop_assert!(!should_prune(&high, 10, &history, &cfg, Direction::Maximize));
            }
        }

        #[test]
        fn direction_symmetry(history in arb_history(), trial in prop::collection::vec(-100.0f64..100.0, 1..6)) {
            let cfg = PruningConfig { enabled: true, min_completed_trials: 1, min_reports: 1 };
            let negate = |s: &[Report]| s.iter().map(|r| Report { step: r.step, value: -r.value }).collect::<Vec<_>>();
            let neg_history: Vec<Vec<Report>> = history.iter().map(|s| negate(s)).collect();
            let trial = series(&trial);
            let neg_trial = negate(&trial);
            for r in &trial {
                prop_assert_eq!(
                    should_prune(&trial, r.step, &history, &cfg, Direction::Maximize),
                    should_prune(&neg_trial, r.step, &neg_history, &cfg, Direction::Minimize)
                );
            }
        }
    }
}

//! Result exports computed purely from a study journal.

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::config::Direction;
use crate::protocol::Envelope;
use crate::sampler::evaluator_seed;
use crate::space::SearchSpace;
use crate::store::{StudyState, Trial};

/// Running best objective after each trial, in trial-id order; `None`
/// before the first completion.
pub fn cumulative_best(state: &StudyState) -> Vec<(u64, Option<f64>)> {
    let direction = state.config.direction;
    let mut best: Option<f64> = None;
    state
        .trials
        .values()
        .map(|t| {
            if let Some(v) = t.objective.filter(|v| v.is_finite()) {
                if best.map_or(true, |b| direction.better(v, b)) {
                    best = Some(v);
                }
            }
            (t.trial_id, best)
        })
        .collect()
}

fn param_cell(space: &SearchSpace, name: &str, value: f64) -> String {
    match space.get(name) {
        Some(spec) if spec.is_integer() => format!("{}", value as i64),
        _ => format!("{value}"),
    }
}

fn opt_cell<T: ToString>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

/// One row per trial: id, state, objective, report count, wall time, the
/// cumulative best and every parameter.
pub fn to_csv(state: &StudyState) -> String {
    let mut writer = csv::Writer::from_writer(Vec::new());
    let names: Vec<&str> = state.space.params().iter().map(|s| s.name.as_str()).collect();
    let mut header = vec!["trial_id", "state", "objective", "n_reports", "wall_ms", "best_so_far"];
    header.extend(&names);
    writer.write_record(&header).expect("in-memory write");
    for (trial, (_, best)) in state.trials.values().zip(cumulative_best(state)) {
        let mut row = vec![
            trial.trial_id.to_string(),
            trial.state.as_str().to_string(),
            opt_cell(trial.objective),
            trial.reports.len().to_string(),
            opt_cell(trial.wall_ms()),
            opt_cell(best),
        ];
        row.extend(names.iter().map(|name| trial.params.get(name).map(|v| param_cell(&state.space, name, v)).unwrap_or_default()));
        writer.write_record(&row).expect("in-memory write");
    }
    String::from_utf8(writer.into_inner().expect("in-memory flush")).expect("csv is utf-8")
}

/// Machine-readable study export.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyExport {
    pub optimizer: String,
    pub direction: Direction,
    pub space_hash: String,
    pub n_trials: usize,
    pub best: Option<BestTrial>,
    pub trials: Vec<Trial>,
    pub cumulative_best: Vec<(u64, Option<f64>)>,
}

pub fn export(state: &StudyState) -> StudyExport {
    StudyExport {
        optimizer: state.config.optimizer.to_string(),
        direction: state.config.direction,
        space_hash: state.space_hash.clone(),
        n_trials: state.trials.len(),
        best: best_trial(state),
        trials: state.trials.values().cloned().collect(),
        cumulative_best: cumulative_best(state),
    }
}

pub fn to_json(state: &StudyState) -> String {
    let mut text = serde_json::to_string_pretty(&export(state)).expect("exports serialize");
    text.push('\n');
    text
}

/// The best trial in envelope form plus its objective.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestTrial {
    #[serde(flatten)]
    pub envelope: Envelope,
    pub objective: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extra_info: Option<Map<String, Value>>,
}

pub fn best_trial(state: &StudyState) -> Option<BestTrial> {
    let trial = state.best_trial()?;
    let seed = evaluator_seed(state.config.seed, trial.trial_id);
    Some(BestTrial {
        envelope: Envelope::new(trial.trial_id, seed, &trial.params, &state.space),
        objective: trial.objective?,
        extra_info: trial.extra_info.clone(),
    })
}

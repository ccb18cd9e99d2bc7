//! Study state rebuilt by replaying journal records.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::record::{Event, JournalRecord, StudyCreated};
use crate::config::{Optimizer, StudyConfig};
use crate::pruning::Report;
use crate::sampler::pso::SwarmState;
use crate::sampler::{IssuedTrial, TrialResult};
use crate::space::{ParamVector, SearchSpace};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrialState {
    Pending,
    Running,
    Completed,
    Pruned,
    Failed,
}

impl TrialState {
    pub fn is_terminal(self) -> bool {
        matches!(self, TrialState::Completed | TrialState::Pruned | TrialState::Failed)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            TrialState::Pending => "pending",
            TrialState::Running => "running",
            TrialState::Completed => "completed",
            TrialState::Pruned => "pruned",
            TrialState::Failed => "failed",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub trial_id: u64,
    pub params: ParamVector,
    pub state: TrialState,
    /// Reports of the current (or final) attempt.
    pub reports: Vec<Report>,
    #[serde(with = "crate::float_repr::option")]
    pub objective: Option<f64>,
    pub extra_info: Option<Map<String, Value>>,
    pub worker_id: Option<String>,
    pub generation: Option<u64>,
    pub pruned_step: Option<u64>,
    pub failure: Option<String>,
    /// Number of times the trial was claimed; above 1 only after a crash.
    pub attempts: u32,
    pub created_ts: u64,
    pub claimed_ts: Option<u64>,
    pub finished_ts: Option<u64>,
}

impl Trial {
    /// Milliseconds from the last claim to the terminal record.
    pub fn wall_ms(&self) -> Option<u64> {
        Some(self.finished_ts?.saturating_sub(self.claimed_ts?))
    }

    /// Outcome in sampler terms, `None` while not terminal.
    pub fn result(&self) -> Option<TrialResult> {
        match self.state {
            TrialState::Completed => Some(TrialResult::Completed(self.objective.unwrap_or(f64::NAN))),
            TrialState::Pruned => Some(TrialResult::Pruned {
                last_report: self.reports.last().map_or(f64::NAN, |r| r.value),
            }),
            TrialState::Failed => Some(TrialResult::Failed),
            TrialState::Pending | TrialState::Running => None,
        }
    }
}

/// Everything the journal says about a study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyState {
    pub config: StudyConfig,
    pub space: SearchSpace,
    pub space_hash: String,
    pub trials: BTreeMap<u64, Trial>,
    /// Latest swarm snapshot (PSO only).
    pub swarm: Option<SwarmState>,
    pub generations_advanced: u64,
    /// Best completed trial and its objective.
    pub best: Option<(u64, f64)>,
    pub last_seq: u64,
    pub created_ts: u64,
    pub last_ts: u64,
}

impl StudyState {
    /// Starts a state from the study's first record.
    pub(crate) fn genesis(record: &JournalRecord) -> Result<StudyState, String> {
        let Event::StudyCreated(created) = Event::from_record(record)? else {
            return Err(format!("first record is {:?}, not study_created", record.kind));
        };
        let StudyCreated { space_hash, space, config, .. } = *created;
        if space.fingerprint() != space_hash {
            return Err("space_hash does not match the embedded space".into());
        }
        Ok(StudyState {
            config,
            space,
            space_hash,
            trials: BTreeMap::new(),
            swarm: None,
            generations_advanced: 0,
            best: None,
            last_seq: record.seq,
            created_ts: record.ts,
            last_ts: record.ts,
        })
    }

    pub fn budget(&self) -> usize {
        self.config.budget()
    }

    /// No further trial work may be recorded.
    pub fn is_sealed(&self) -> bool {
        match self.config.optimizer {
            Optimizer::Random | Optimizer::Tpe => self.terminal_count() >= self.config.n_trials,
            Optimizer::Pso => self.generations_advanced >= self.config.pso.n_generations as u64,
        }
    }

    pub fn terminal_count(&self) -> usize {
        self.trials.values().filter(|t| t.state.is_terminal()).count()
    }

    pub fn count(&self, state: TrialState) -> usize {
        self.trials.values().filter(|t| t.state == state).count()
    }

    /// Lowest-id pending trial.
    pub fn next_pending(&self) -> Option<&Trial> {
        self.trials.values().find(|t| t.state == TrialState::Pending)
    }

    /// Report series of completed trials, the basis for pruning medians.
    pub fn completed_reports(&self) -> Vec<Vec<Report>> {
        self.trials
            .values()
            .filter(|t| t.state == TrialState::Completed)
            .map(|t| t.reports.clone())
            .collect()
    }

    /// The trials in sampler terms, for rebuilding a sampler.
    pub fn issued_trials(&self) -> Vec<IssuedTrial> {
        self.trials
            .values()
            .map(|t| IssuedTrial {
                trial_id: t.trial_id,
                params: t.params.clone(),
                generation: t.generation,
                result: t.result(),
            })
            .collect()
    }

    /// Puts trials interrupted mid-evaluation back in the queue.
    pub fn requeue_running(&mut self) -> Vec<u64> {
        let mut requeued = Vec::new();
        for trial in self.trials.values_mut().filter(|t| t.state == TrialState::Running) {
            trial.state = TrialState::Pending;
            trial.reports.clear();
            trial.worker_id = None;
            trial.claimed_ts = None;
            requeued.push(trial.trial_id);
        }
        requeued
    }

    fn trial(&self, trial_id: u64) -> Result<&Trial, String> {
        self.trials.get(&trial_id).ok_or_else(|| format!("trial {trial_id} was never created"))
    }

    fn running(&self, trial_id: u64) -> Result<&Trial, String> {
        let trial = self.trial(trial_id)?;
        if trial.state != TrialState::Running {
            return Err(format!("trial {trial_id} is {}, not running", trial.state.as_str()));
        }
        Ok(trial)
    }

    /// Checks that `event` may follow the current state. `strict` refuses
    /// to re-claim a running trial, which replay must accept because a crashed
    /// worker's trial is claimed again after recovery.
    pub(crate) fn validate(&self, event: &Event, strict: bool) -> Result<(), String> {
        match event {
            Event::StudyCreated(_) => Err("study_created may only be the first record".into()),
            Event::TrialCreated { trial_id, params, generation } => {
                let expected = self.trials.len() as u64;
                if *trial_id != expected {
                    return Err(format!("trial ids are assigned in order: expected {expected}, got {trial_id}"));
                }
                if *trial_id >= self.budget() as u64 {
                    return Err(format!("trial {trial_id} exceeds the budget of {}", self.budget()));
                }
                self.space.check(params).map_err(|e| format!("trial {trial_id}: {e}"))?;
                if let (Optimizer::Pso, None) = (self.config.optimizer, generation) {
                    return Err(format!("PSO trial {trial_id} without a generation"));
                }
                Ok(())
            }
            Event::TrialClaimed { trial_id } => {
                let trial = self.trial(*trial_id)?;
                match trial.state {
                    TrialState::Pending => Ok(()),
                    TrialState::Running if !strict => Ok(()),
                    other => Err(format!("trial {trial_id} is {}, cannot be claimed", other.as_str())),
                }
            }
            Event::Report { trial_id, step, .. } => {
                let trial = self.running(*trial_id)?;
                match trial.reports.last() {
                    Some(last) if *step <= last.step => {
                        Err(format!("trial {trial_id}: report step {step} after step {}", last.step))
                    }
                    _ => Ok(()),
                }
            }
            Event::TrialCompleted { trial_id, .. } | Event::TrialFailed { trial_id, .. } => {
                self.running(*trial_id).map(|_| ())
            }
            Event::TrialPruned { trial_id, step } => {
                let trial = self.running(*trial_id)?;
                match trial.reports.last() {
                    Some(last) if last.step == *step => Ok(()),
                    Some(last) => Err(format!("trial {trial_id} pruned at step {step}, last report was {}", last.step)),
                    None => Err(format!("trial {trial_id} pruned without reports")),
                }
            }
            Event::GenerationAdvanced { generation, swarm } => {
                if self.config.optimizer != Optimizer::Pso {
                    return Err("generation_advanced in a non-PSO study".into());
                }
                if *generation != self.generations_advanced + 1 || swarm.generation != *generation {
                    return Err(format!(
                        "generation_advanced {generation} after {} advances",
                        self.generations_advanced
                    ));
                }
                let closing = generation - 1;
                let members: Vec<&Trial> = self.trials.values().filter(|t| t.generation == Some(closing)).collect();
                if members.len() != self.config.pso.population_size || members.iter().any(|t| !t.state.is_terminal()) {
                    return Err(format!("generation {closing} is not fully terminal"));
                }
                Ok(())
            }
        }
    }

    /// Applies an already validated event.
    pub(crate) fn apply(&mut self, record: &JournalRecord, event: Event) {
        self.last_seq = record.seq;
        self.last_ts = record.ts;
        let ts = record.ts;
        match event {
            Event::StudyCreated(_) => {}
            Event::TrialCreated { trial_id, params, generation } => {
                self.trials.insert(
                    trial_id,
                    Trial {
                        trial_id,
                        params,
                        state: TrialState::Pending,
                        reports: Vec::new(),
                        objective: None,
                        extra_info: None,
                        worker_id: None,
                        generation,
                        pruned_step: None,
                        failure: None,
                        attempts: 0,
                        created_ts: ts,
                        claimed_ts: None,
                        finished_ts: None,
                    },
                );
            }
            Event::TrialClaimed { trial_id } => {
                let trial = self.trials.get_mut(&trial_id).expect("validated");
                trial.state = TrialState::Running;
                trial.reports.clear();
                trial.worker_id = Some(record.worker_id.clone());
                trial.claimed_ts = Some(ts);
                trial.attempts += 1;
            }
            Event::Report { trial_id, step, value } => {
                let trial = self.trials.get_mut(&trial_id).expect("validated");
                trial.reports.push(Report { step, value });
            }
            Event::TrialCompleted { trial_id, objective, extra_info } => {
                let trial = self.trials.get_mut(&trial_id).expect("validated");
                trial.state = TrialState::Completed;
                trial.objective = Some(objective);
                trial.extra_info = extra_info;
                trial.finished_ts = Some(ts);
                self.update_best(trial_id, objective);
            }
            Event::TrialPruned { trial_id, step } => {
                let trial = self.trials.get_mut(&trial_id).expect("validated");
                trial.state = TrialState::Pruned;
                trial.pruned_step = Some(step);
                trial.finished_ts = Some(ts);
            }
            Event::TrialFailed { trial_id, reason } => {
                let trial = self.trials.get_mut(&trial_id).expect("validated");
                trial.state = TrialState::Failed;
                trial.failure = Some(reason);
                trial.finished_ts = Some(ts);
            }
            Event::GenerationAdvanced { generation, swarm } => {
                self.generations_advanced = generation;
                self.swarm = Some(swarm);
            }
        }
    }

    fn update_best(&mut self, trial_id: u64, objective: f64) {
        if !objective.is_finite() {
            return;
        }
        let direction = self.config.direction;
        let replace = match self.best {
            None => true,
            Some((best_id, best)) => {
                direction.better(objective, best) || (objective == best && trial_id < best_id)
            }
        };
        if replace {
            self.best = Some((trial_id, objective));
        }
    }

    /// The best completed trial, if any.
    pub fn best_trial(&self) -> Option<&Trial> {
        self.best.and_then(|(id, _)| self.trials.get(&id))
    }
}

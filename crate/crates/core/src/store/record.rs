//! On-disk record schema of the study journal.

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::config::StudyConfig;
use crate::sampler::pso::SwarmState;
use crate::space::{ParamVector, SearchSpace};

/// Version tag written into `study_created`.
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordKind {
    StudyCreated,
    TrialCreated,
    TrialClaimed,
    Report,
    TrialCompleted,
    TrialPruned,
    TrialFailed,
    GenerationAdvanced,
}

impl RecordKind {
    pub fn is_terminal(self) -> bool {
        matches!(self, RecordKind::TrialCompleted | RecordKind::TrialPruned | RecordKind::TrialFailed)
    }
}

/// One line of `journal.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JournalRecord {
    pub seq: u64,
    pub kind: RecordKind,
    /// UTC milliseconds since the Unix epoch.
    pub ts: u64,
    pub worker_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trial_id: Option<u64>,
    pub payload: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyCreated {
    pub format: u32,
    pub space_hash: String,
    pub space: SearchSpace,
    pub config: StudyConfig,
}

/// Typed view of a record's kind, trial id and payload.
#[derive(Debug, Clone, PartialEq)]
pub enum Event {
    StudyCreated(Box<StudyCreated>),
    TrialCreated {
        trial_id: u64,
        params: ParamVector,
        generation: Option<u64>,
    },
    TrialClaimed {
        trial_id: u64,
    },
    Report {
        trial_id: u64,
        step: u64,
        value: f64,
    },
    TrialCompleted {
        trial_id: u64,
        objective: f64,
        extra_info: Option<Map<String, Value>>,
    },
    TrialPruned {
        trial_id: u64,
        step: u64,
    },
    TrialFailed {
        trial_id: u64,
        reason: String,
    },
    GenerationAdvanced {
        generation: u64,
        swarm: SwarmState,
    },
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CreatedPayload {
    params: ParamVector,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    generation: Option<u64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EmptyPayload {}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ReportPayload {
    step: u64,
    #[serde(with = "crate::float_repr")]
    value: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CompletedPayload {
    #[serde(with = "crate::float_repr")]
    objective: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    extra_info: Option<Map<String, Value>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PrunedPayload {
    step: u64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FailedPayload {
    reason: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AdvancedPayload {
    generation: u64,
    swarm: SwarmState,
}

fn to_value<T: Serialize>(payload: &T) -> Value {
    serde_json::to_value(payload).expect("journal payloads serialize")
}

impl Event {
    pub fn kind(&self) -> RecordKind {
        match self {
            Event::StudyCreated(_) => RecordKind::StudyCreated,
            Event::TrialCreated { .. } => RecordKind::TrialCreated,
            Event::TrialClaimed { .. } => RecordKind::TrialClaimed,
            Event::Report { .. } => RecordKind::Report,
            Event::TrialCompleted { .. } => RecordKind::TrialCompleted,
            Event::TrialPruned { .. } => RecordKind::TrialPruned,
            Event::TrialFailed { .. } => RecordKind::TrialFailed,
            Event::GenerationAdvanced { .. } => RecordKind::GenerationAdvanced,
        }
    }

    pub fn trial_id(&self) -> Option<u64> {
        match self {
            Event::StudyCreated(_) | Event::GenerationAdvanced { .. } => None,
            Event::TrialCreated { trial_id, .. }
            | Event::TrialClaimed { trial_id }
            | Event::Report { trial_id, .. }
            | Event::TrialCompleted { trial_id, .. }
            | Event::TrialPruned { trial_id, .. }
            | Event::TrialFailed { trial_id, .. } => Some(*trial_id),
        }
    }

    pub fn payload(&self) -> Value {
        match self {
            Event::StudyCreated(created) => to_value(created.as_ref()),
            Event::TrialCreated { params, generation, .. } => to_value(&CreatedPayload {
                params: params.clone(),
                generation: *generation,
            }),
            Event::TrialClaimed { .. } => to_value(&EmptyPayload {}),
            Event::Report { step, value, .. } => to_value(&ReportPayload { step: *step, value: *value }),
            Event::TrialCompleted { objective, extra_info, .. } => to_value(&CompletedPayload {
                objective: *objective,
                extra_info: extra_info.clone(),
            }),
            Event::TrialPruned { step, .. } => to_value(&PrunedPayload { step: *step }),
            Event::TrialFailed { reason, .. } => to_value(&FailedPayload { reason: reason.clone() }),
            Event::GenerationAdvanced { generation, swarm } => to_value(&AdvancedPayload {
                generation: *generation,
                swarm: swarm.clone(),
            }),
        }
    }

    /// Decodes the typed event carried by `record`.
    pub fn from_record(record: &JournalRecord) -> Result<Event, String> {
        fn parse<T: for<'de> Deserialize<'de>>(payload: &Value) -> Result<T, String> {
            T::deserialize(payload).map_err(|e| format!("bad payload: {e}"))
        }
        let needs_id = || record.trial_id.ok_or_else(|| format!("{:?} record without trial_id", record.kind));
        let payload = &record.payload;
        let event = match record.kind {
            RecordKind::StudyCreated => Event::StudyCreated(Box::new(parse(payload)?)),
            RecordKind::TrialCreated => {
                let p: CreatedPayload = parse(payload)?;
                Event::TrialCreated {
                    trial_id: needs_id()?,
                    params: p.params,
                    generation: p.generation,
                }
            }
            RecordKind::TrialClaimed => {
                let _: EmptyPayload = parse(payload)?;
                Event::TrialClaimed { trial_id: needs_id()? }
            }
            RecordKind::Report => {
                let p: ReportPayload = parse(payload)?;
                Event::Report {
                    trial_id: needs_id()?,
                    step: p.step,
                    value: p.value,
                }
            }
            RecordKind::TrialCompleted => {
                let p: CompletedPayload = parse(payload)?;
                Event::TrialCompleted {
                    trial_id: needs_id()?,
                    objective: p.objective,
                    extra_info: p.extra_info,
                }
            }
            RecordKind::TrialPruned => {
                let p: PrunedPayload = parse(payload)?;
                Event::TrialPruned {
                    trial_id: needs_id()?,
                    step: p.step,
                }
            }
            RecordKind::TrialFailed => {
                let p: FailedPayload = parse(payload)?;
                Event::TrialFailed {
                    trial_id: needs_id()?,
                    reason: p.reason,
                }
            }
            RecordKind::GenerationAdvanced => {
                let p: AdvancedPayload = parse(payload)?;
                Event::GenerationAdvanced {
                    generation: p.generation,
                    swarm: p.swarm,
                }
            }
        };
        if event.trial_id().is_none() && record.trial_id.is_some() {
            return Err(format!("{:?} record must not carry a trial_id", record.kind));
        }
        Ok(event)
    }
}

/// Serializes a record as one LF-terminated JSON line.
pub fn encode_line(record: &JournalRecord) -> String {
    let mut line = serde_json::to_string(record).expect("journal records serialize");
    line.push('\n');
    line
}

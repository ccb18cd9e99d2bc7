//! Suggestion strategies behind one ask/tell interface.
//!
//! [`Sampler::suggest`] hands out trial ids in order (0, 1, 2, ...) with the
//! parameters to evaluate; [`Sampler::observe`] feeds results back. Every
//! random draw comes from a generator derived from the study seed and the
//! trial id (or PSO generation), so suggestions do not depend on wall-clock
//! timing and a sampler can be rebuilt from a journal.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{Optimizer, StudyConfig};
use crate::error::SamplerError;
use crate::space::{ParamVector, SearchSpace};

pub mod pso;
pub mod random;
pub mod tpe;

pub use pso::{pso_init, pso_step, velocity_update, SwarmState};
pub use random::sample_random;
pub use tpe::{tpe_suggest, CompletedTrial, PrunedTrial, TrialHistory};

pub(crate) fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Generator used to draw the suggestion for one trial.
pub fn trial_rng(seed: u64, trial_id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial_id);
    rng
}

/// Generator for swarm initialization (`generation == None`) or for the
/// update that closes `generation`.
pub fn swarm_rng(seed: u64, generation: Option<u64>) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(seed ^ 0x5053_4f5f_5357_524d));
    rng.set_stream(generation.map_or(0, |g| g + 1));
    rng
}

/// Seed handed to an evaluator for trial-level randomness.
pub fn evaluator_seed(study_seed: u64, trial_id: u64) -> u64 {
    splitmix64(study_seed ^ splitmix64(trial_id))
}

/// How a trial ended, as far as a sampler is concerned.
#[derive(Debug, Clone, Copy)]
pub enum TrialResult {
    Completed(f64),
    Pruned { last_report: f64 },
    Failed,
}

impl PartialEq for TrialResult {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (TrialResult::Completed(a), TrialResult::Completed(b)) => a.to_bits() == b.to_bits(),
            (TrialResult::Pruned { last_report: a }, TrialResult::Pruned { last_report: b }) => {
                a.to_bits() == b.to_bits()
            }
            (TrialResult::Failed, TrialResult::Failed) => true,
            _ => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuggestedTrial {
    pub trial_id: u64,
    pub params: ParamVector,
    /// PSO generation the particle belongs to.
    pub generation: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Suggestion {
    Trial(SuggestedTrial),
    /// PSO barrier: the current generation is fully handed out but not yet
    /// fully observed.
    Wait,
    /// The trial budget is used up.
    Exhausted,
}

/// Emitted when a PSO generation closes.
#[derive(Debug, Clone, PartialEq)]
pub struct GenerationAdvance {
    pub generation: u64,
    pub swarm: SwarmState,
}

/// A trial as recorded elsewhere, used to rebuild a sampler.
#[derive(Debug, Clone)]
pub struct IssuedTrial {
    pub trial_id: u64,
    pub params: ParamVector,
    pub generation: Option<u64>,
    pub result: Option<TrialResult>,
}

pub struct Sampler {
    space: SearchSpace,
    config: StudyConfig,
    next_trial_id: u64,
    issued: BTreeMap<u64, ParamVector>,
    results: BTreeMap<u64, TrialResult>,
    swarm: Option<SwarmState>,
    ready_advance: Option<GenerationAdvance>,
}

impl Sampler {
    pub fn new(space: SearchSpace, config: StudyConfig) -> Result<Self, SamplerError> {
        let swarm = match config.optimizer {
            Optimizer::Pso => Some(pso_init(&space, &config.pso, &mut swarm_rng(config.seed, None))?),
            _ => None,
        };
        Ok(Sampler {
            space,
            config,
            next_trial_id: 0,
            issued: BTreeMap::new(),
            results: BTreeMap::new(),
            swarm,
            ready_advance: None,
        })
    }

    /// Rebuilds a sampler from previously issued trials and, for PSO, the
    /// last swarm snapshot. If the current PSO generation is already fully
    /// observed, the pending advance is available from [`Self::take_advance`].
    pub fn restore(
        space: SearchSpace,
        config: StudyConfig,
        trials: &[IssuedTrial],
        swarm: Option<SwarmState>,
    ) -> Result<Self, SamplerError> {
        let mut sampler = Sampler::new(space, config)?;
        if let Some(swarm) = swarm {
            if sampler.config.optimizer != Optimizer::Pso {
                return Err(SamplerError::Restore("swarm snapshot for a non-PSO study".into()));
            }
            sampler.swarm = Some(swarm);
        }
        for (expected, trial) in trials.iter().enumerate() {
            if trial.trial_id != expected as u64 {
                return Err(SamplerError::Restore(format!(
                    "trial ids must be contiguous from 0; found {} at position {expected}",
                    trial.trial_id
                )));
            }
            sampler.issued.insert(trial.trial_id, trial.params.clone());
            if let Some(result) = trial.result {
                sampler.results.insert(trial.trial_id, result);
            }
        }
        sampler.next_trial_id = trials.len() as u64;
        if let Some(swarm) = &sampler.swarm {
            let pop = swarm.population_size() as u64;
            let generation_end = (swarm.generation + 1) * pop;
            if sampler.next_trial_id > generation_end {
                return Err(SamplerError::Restore(format!(
                    "{} trials issued but the swarm is at generation {}",
                    sampler.next_trial_id, swarm.generation
                )));
            }
            sampler.maybe_advance()?;
        }
        Ok(sampler)
    }

    pub fn space(&self) -> &SearchSpace {
        &self.space
    }

    pub fn config(&self) -> &StudyConfig {
        &self.config
    }

    pub fn swarm(&self) -> Option<&SwarmState> {
        self.swarm.as_ref()
    }

    pub fn issued_count(&self) -> u64 {
        self.next_trial_id
    }

    /// Observed data in trial-id order.
    pub fn history(&self) -> TrialHistory {
        let mut history = TrialHistory::default();
        for (&trial_id, params) in &self.issued {
            match self.results.get(&trial_id) {
                Some(TrialResult::Completed(objective)) => history.completed.push(CompletedTrial {
                    trial_id,
                    params: params.clone(),
                    objective: *objective,
                }),
                Some(TrialResult::Pruned { last_report }) => history.pruned.push(PrunedTrial {
                    trial_id,
                    params: params.clone(),
                    last_report: *last_report,
                }),
                Some(TrialResult::Failed) => {}
                None => history.running.push(params.clone()),
            }
        }
        history
    }

    pub fn suggest(&mut self) -> Suggestion {
        let trial_id = self.next_trial_id;
        let (params, generation) = match self.config.optimizer {
            Optimizer::Random | Optimizer::Tpe => {
                if trial_id >= self.config.n_trials as u64 {
                    return Suggestion::Exhausted;
                }
                let mut rng = trial_rng(self.config.seed, trial_id);
                let params = match self.config.optimizer {
                    Optimizer::Random => sample_random(&self.space, &mut rng),
                    _ => tpe_suggest(&self.space, &self.history(), &self.config.tpe, self.config.direction, &mut rng),
                };
                (params, None)
            }
            Optimizer::Pso => {
                let swarm = self.swarm.as_ref().expect("pso sampler has a swarm");
                if swarm.generation >= self.config.pso.n_generations as u64 {
                    return Suggestion::Exhausted;
                }
                let pop = swarm.population_size() as u64;
                let particle = trial_id - swarm.generation * pop;
                if particle >= pop {
                    return Suggestion::Wait;
                }
                let params = self.space.assemble(&swarm.positions[particle as usize]);
                (params, Some(swarm.generation))
            }
        };
        self.issued.insert(trial_id, params.clone());
        self.next_trial_id += 1;
        Suggestion::Trial(SuggestedTrial {
            trial_id,
            params,
            generation,
        })
    }

    /// Records a trial result. Repeating an identical observation is a no-op.
    pub fn observe(&mut self, trial_id: u64, result: TrialResult) -> Result<(), SamplerError> {
        if !self.issued.contains_key(&trial_id) {
            return Err(SamplerError::UnknownTrial(trial_id));
        }
        if let Some(previous) = self.results.get(&trial_id) {
            return if *previous == result {
                Ok(())
            } else {
                Err(SamplerError::ConflictingObservation(trial_id))
            };
        }
        self.results.insert(trial_id, result);
        if self.swarm.is_some() {
            self.maybe_advance()?;
        }
        Ok(())
    }

    /// The generation advance produced by the last observation, if any.
    pub fn take_advance(&mut self) -> Option<GenerationAdvance> {
        self.ready_advance.take()
    }

    fn maybe_advance(&mut self) -> Result<(), SamplerError> {
        let swarm = self.swarm.as_ref().expect("pso sampler has a swarm");
        let pop = swarm.population_size() as u64;
        let first = swarm.generation * pop;
        let evaluated: Option<Vec<(usize, f64)>> = (0..pop)
            .map(|i| {
                self.results.get(&(first + i)).map(|result| {
                    let value = match *result {
                        TrialResult::Completed(v) => v,
                        TrialResult::Pruned { .. } | TrialResult::Failed => f64::NAN,
                    };
                    (i as usize, value)
                })
            })
            .collect();
        let Some(evaluated) = evaluated else {
            return Ok(());
        };
        let mut rng = swarm_rng(self.config.seed, Some(swarm.generation));
        let next = pso_step(swarm, &evaluated, &self.space, &self.config.pso, self.config.direction, &mut rng)?;
        self.ready_advance = Some(GenerationAdvance {
            generation: next.generation,
            swarm: next.clone(),
        });
        self.swarm = Some(next);
        Ok(())
    }
}

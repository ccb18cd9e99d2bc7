//! Study execution: one coordinator owning the sampler and the journal, and
//! a pool of workers running evaluations.
//!
//! Workers never touch the journal or the sampler. They send each report to
//! the coordinator and block on its continue/stop answer, then send the
//! trial's outcome. With one worker everything runs on the calling thread.

use std::panic::{self, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::sync::mpsc::{self, Sender};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use crate::config::StudyConfig;
use crate::error::{ConfigError, Error, Result, StoreError};
use crate::protocol::{self, Decision, Envelope, ExchangeOptions, Outcome};
use crate::pruning::{should_prune, Report};
use crate::sampler::{evaluator_seed, Sampler, Suggestion};
use crate::space::{ParamVector, SearchSpace};
use crate::store::{Durability, Event, StudyState, Trial, TrialState, TrialStore};

/// What an evaluator gets to know about a trial.
#[derive(Debug, Clone)]
pub struct TrialContext {
    pub trial_id: u64,
    /// Seed for the evaluator's own randomness, derived from the study seed.
    pub seed: u64,
    pub params: ParamVector,
    pub envelope: Envelope,
    /// Where a process evaluator's envelope is written.
    pub envelope_path: PathBuf,
}

/// Runs one trial. `report` forwards an intermediate value and returns
/// whether to go on.
pub trait Evaluator: Send + Sync {
    fn evaluate(&self, trial: &TrialContext, report: &mut dyn FnMut(u64, f64) -> Decision) -> Outcome;
}

/// Evaluator backed by an external program speaking the line protocol.
#[derive(Debug, Clone)]
pub struct ProcessEvaluator {
    command: String,
    pub options: ExchangeOptions,
}

impl ProcessEvaluator {
    /// Fails if the program cannot be found.
    pub fn new(command: &str) -> Result<ProcessEvaluator, ConfigError> {
        let argv = protocol::split_command(command).map_err(ConfigError::EvaluatorNotFound)?;
        if resolve_program(&argv[0]).is_none() {
            return Err(ConfigError::EvaluatorNotFound(argv[0].clone()));
        }
        Ok(ProcessEvaluator {
            command: command.to_string(),
            options: ExchangeOptions::default(),
        })
    }

    pub fn command(&self) -> &str {
        &self.command
    }
}

fn resolve_program(program: &str) -> Option<PathBuf> {
    let path = Path::new(program);
    if path.components().count() > 1 {
        return path.is_file().then(|| path.to_path_buf());
    }
    std::env::var_os("PATH")
        .map(|paths| std::env::split_paths(&paths).map(|dir| dir.join(program)).collect::<Vec<_>>())
        .unwrap_or_default()
        .into_iter()
        .find(|candidate| candidate.is_file())
}

impl Evaluator for ProcessEvaluator {
    fn evaluate(&self, trial: &TrialContext, report: &mut dyn FnMut(u64, f64) -> Decision) -> Outcome {
        protocol::run_process(&self.command, &trial.envelope, &trial.envelope_path, &self.options, report)
    }
}

/// Evaluator backed by a closure running in the worker thread.
pub struct FnEvaluator<F>(pub F);

impl<F> Evaluator for FnEvaluator<F>
where
    F: Fn(&TrialContext, &mut dyn FnMut(u64, f64) -> Decision) -> Outcome + Send + Sync,
{
    fn evaluate(&self, trial: &TrialContext, report: &mut dyn FnMut(u64, f64) -> Decision) -> Outcome {
        (self.0)(trial, report)
    }
}

/// Settings of one run that are not part of the study definition.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Overrides the configured number of workers.
    pub workers: Option<usize>,
    /// Per-trial evaluator timeout; none by default.
    pub timeout: Option<Duration>,
    /// Fail trials whose evaluator sends FINAL without any REPORT.
    pub require_reports: bool,
    /// Budget hint written into envelopes.
    pub max_steps: Option<u64>,
    /// Report cadence hint written into envelopes.
    pub report_every: Option<u64>,
    pub durability: Durability,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StudyStatus {
    Finished,
    /// The budget is spent but no trial completed.
    NoCompletedTrials,
}

#[derive(Debug, Clone)]
pub struct StudyReport {
    pub status: StudyStatus,
    pub state: StudyState,
    /// Terminal trials recorded by this run (not counting earlier runs).
    pub new_terminals: usize,
    pub wall_clock: Duration,
}

impl StudyReport {
    pub fn best(&self) -> Option<&Trial> {
        self.state.best_trial()
    }

    pub fn trials(&self) -> impl Iterator<Item = &Trial> {
        self.state.trials.values()
    }

    pub fn count(&self, state: TrialState) -> usize {
        self.state.count(state)
    }
}

/// Runs a new study with the configured evaluator command.
pub fn run_study(space: &SearchSpace, config: &StudyConfig, options: &RunOptions) -> Result<StudyReport> {
    let evaluator = process_evaluator(config, options)?;
    run_study_with(space, config, evaluator, options)
}

/// Runs a new study with any evaluator.
pub fn run_study_with(
    space: &SearchSpace,
    config: &StudyConfig,
    evaluator: Arc<dyn Evaluator>,
    options: &RunOptions,
) -> Result<StudyReport> {
    config.validate()?;
    let store = TrialStore::create(&config.study_path, space, config, COORDINATOR)?;
    drive(store, evaluator, options)
}

/// Continues a study from its journal, using the evaluator command recorded
/// there.
pub fn resume_study(study_path: &Path, options: &RunOptions) -> Result<StudyReport> {
    let store = TrialStore::open(study_path, COORDINATOR)?;
    let evaluator = process_evaluator(&store.state().config, options)?;
    drive(store, evaluator, options)
}

pub fn resume_study_with(study_path: &Path, evaluator: Arc<dyn Evaluator>, options: &RunOptions) -> Result<StudyReport> {
    let store = TrialStore::open(study_path, COORDINATOR)?;
    drive(store, evaluator, options)
}

/// Resumes the study at `config.study_path`, refusing if `space` differs
/// from the journal's. The journal's study settings stay authoritative.
pub fn resume_with_config(space: &SearchSpace, config: &StudyConfig, options: &RunOptions) -> Result<StudyReport> {
    let store = TrialStore::open(&config.study_path, COORDINATOR)?;
    let journal = store.state().space_hash.clone();
    let edited = space.fingerprint();
    if journal != edited {
        return Err(StoreError::SpaceMismatch { journal, config: edited }.into());
    }
    let evaluator = process_evaluator(&store.state().config, options)?;
    drive(store, evaluator, options)
}

fn process_evaluator(config: &StudyConfig, options: &RunOptions) -> Result<Arc<dyn Evaluator>> {
    let command = config
        .evaluator_command
        .as_deref()
        .ok_or_else(|| ConfigError::InvalidStudy("evaluator_command is not set".into()))?;
    let mut evaluator = ProcessEvaluator::new(command)?;
    evaluator.options.timeout = options.timeout;
    evaluator.options.require_reports = options.require_reports;
    Ok(Arc::new(evaluator))
}

const COORDINATOR: &str = "coordinator";

fn worker_name(index: usize) -> String {
    format!("worker-{index}")
}

struct Coordinator {
    store: TrialStore,
    sampler: Sampler,
    options: RunOptions,
    new_terminals: usize,
    fatal: Option<Error>,
}

impl Coordinator {
    /// Next trial to evaluate: interrupted trials first, then fresh
    /// suggestions. `None` at a PSO barrier or when the budget is spent.
    fn next_trial(&mut self, worker: &str) -> Result<Option<TrialContext>> {
        if self.fatal.is_some() {
            return Ok(None);
        }
        let trial = match self.store.claim_next(worker)? {
            Some(trial) => trial,
            None => match self.sampler.suggest() {
                Suggestion::Trial(s) => {
                    self.store.append(Event::TrialCreated {
                        trial_id: s.trial_id,
                        params: s.params,
                        generation: s.generation,
                    })?;
                    self.store.claim_next(worker)?.expect("trial just created")
                }
                Suggestion::Wait | Suggestion::Exhausted => return Ok(None),
            },
        };
        let state = self.store.state();
        let seed = evaluator_seed(state.config.seed, trial.trial_id);
        let mut envelope = Envelope::new(trial.trial_id, seed, &trial.params, &state.space);
        envelope.max_steps = self.options.max_steps;
        envelope.report_every = self.options.report_every;
        let relative = self.store.dir().join("envelopes").join(format!("trial-{}.json", trial.trial_id));
        let envelope_path = std::path::absolute(&relative).unwrap_or(relative);
        Ok(Some(TrialContext {
            trial_id: trial.trial_id,
            seed,
            params: trial.params,
            envelope,
            envelope_path,
        }))
    }

    fn on_report(&mut self, worker: &str, trial_id: u64, step: u64, value: f64) -> Decision {
        if self.fatal.is_some() {
            return Decision::Abort;
        }
        if let Err(e) = self.store.append_as(worker, Event::Report { trial_id, step, value }) {
            self.fatal = Some(e.into());
            return Decision::Abort;
        }
        let state = self.store.state();
        let Some(cfg) = state.config.active_pruning() else {
            return Decision::Continue;
        };
        let history: Vec<&[Report]> = state
            .trials
            .values()
            .filter(|t| t.state == TrialState::Completed)
            .map(|t| t.reports.as_slice())
            .collect();
        let reports = &state.trials[&trial_id].reports;
        if should_prune(reports, step, &history, cfg, state.config.direction) {
            Decision::Stop
        } else {
            Decision::Continue
        }
    }

    fn on_finished(&mut self, worker: &str, trial_id: u64, outcome: Outcome) {
        if self.fatal.is_some() {
            return;
        }
        if let Err(e) = self.record_outcome(worker, trial_id, outcome) {
            self.fatal = Some(e);
        }
    }

    fn record_outcome(&mut self, worker: &str, trial_id: u64, outcome: Outcome) -> Result<()> {
        let event = match outcome {
            Outcome::Completed { objective, extra_info } => Event::TrialCompleted { trial_id, objective, extra_info },
            Outcome::Pruned { step } => Event::TrialPruned { trial_id, step },
            Outcome::Failed { reason } => Event::TrialFailed { trial_id, reason },
        };
        match self.store.append_as(worker, event) {
            Ok(_) => {}
            Err(StoreError::Lifecycle(reason)) => {
                // e.g. an in-process evaluator claiming a prune at a step it never reported
                let reason = format!("invalid outcome: {reason}");
                self.store.append_as(worker, Event::TrialFailed { trial_id, reason })?;
            }
            Err(e) => return Err(e.into()),
        }
        self.new_terminals += 1;
        let trial = &self.store.state().trials[&trial_id];
        let result = trial.result().expect("terminal trial");
        self.sampler.observe(trial_id, result)?;
        if let Some(advance) = self.sampler.take_advance() {
            self.store.append(Event::GenerationAdvanced {
                generation: advance.generation,
                swarm: advance.swarm,
            })?;
        }
        Ok(())
    }
}

fn run_guarded(evaluator: &dyn Evaluator, ctx: &TrialContext, report: &mut dyn FnMut(u64, f64) -> Decision) -> Outcome {
    panic::catch_unwind(AssertUnwindSafe(|| evaluator.evaluate(ctx, report)))
        .unwrap_or_else(|_| Outcome::failed("evaluator panicked"))
}

enum WorkerMsg {
    Report {
        worker: usize,
        trial_id: u64,
        step: u64,
        value: f64,
        reply: Sender<Decision>,
    },
    Finished {
        worker: usize,
        trial_id: u64,
        outcome: Outcome,
    },
}

fn drive(mut store: TrialStore, evaluator: Arc<dyn Evaluator>, options: &RunOptions) -> Result<StudyReport> {
    let started = Instant::now();
    store.durability = options.durability;
    store.hold_lock()?;
    store.requeue_running();
    let state = store.state();
    let sampler = Sampler::restore(
        state.space.clone(),
        state.config.clone(),
        &state.issued_trials(),
        state.swarm.clone(),
    )?;
    let workers = options.workers.unwrap_or(state.config.workers).max(1);
    let mut coord = Coordinator {
        store,
        sampler,
        options: options.clone(),
        new_terminals: 0,
        fatal: None,
    };
    // a crash between a generation's last terminal and its advance record
    if let Some(advance) = coord.sampler.take_advance() {
        coord.store.append(Event::GenerationAdvanced {
            generation: advance.generation,
            swarm: advance.swarm,
        })?;
    }

    if workers == 1 {
        run_inline(&mut coord, evaluator.as_ref())?;
    } else {
        run_pool(&mut coord, evaluator, workers)?;
    }
    if let Some(e) = coord.fatal.take() {
        return Err(e);
    }
    coord.store.release_lock();
    let state = coord.store.state().clone();
    let status = if state.best.is_some() || state.count(TrialState::Completed) > 0 {
        StudyStatus::Finished
    } else {
        StudyStatus::NoCompletedTrials
    };
    Ok(StudyReport {
        status,
        state,
        new_terminals: coord.new_terminals,
        wall_clock: started.elapsed(),
    })
}

fn run_inline(coord: &mut Coordinator, evaluator: &dyn Evaluator) -> Result<()> {
    let worker = worker_name(0);
    while let Some(ctx) = coord.next_trial(&worker)? {
        let outcome = run_guarded(evaluator, &ctx, &mut |step, value| coord.on_report(&worker, ctx.trial_id, step, value));
        coord.on_finished(&worker, ctx.trial_id, outcome);
    }
    Ok(())
}

fn run_pool(coord: &mut Coordinator, evaluator: Arc<dyn Evaluator>, workers: usize) -> Result<()> {
    let (to_coord, inbox) = mpsc::channel::<WorkerMsg>();
    let mut jobs = Vec::with_capacity(workers);
    let mut handles = Vec::with_capacity(workers);
    for index in 0..workers {
        let (job_tx, job_rx) = mpsc::channel::<TrialContext>();
        let to_coord = to_coord.clone();
        let evaluator = evaluator.clone();
        handles.push(thread::spawn(move || {
            for ctx in job_rx {
                let trial_id = ctx.trial_id;
                let mut report = |step: u64, value: f64| {
                    let (reply, answer) = mpsc::channel();
                    let msg = WorkerMsg::Report { worker: index, trial_id, step, value, reply };
                    if to_coord.send(msg).is_err() {
                        return Decision::Abort;
                    }
                    answer.recv().unwrap_or(Decision::Abort)
                };
                let outcome = run_guarded(evaluator.as_ref(), &ctx, &mut report);
                if to_coord.send(WorkerMsg::Finished { worker: index, trial_id, outcome }).is_err() {
                    return;
                }
            }
        }));
        jobs.push(job_tx);
    }
    drop(to_coord);

    let mut idle: Vec<usize> = (0..workers).rev().collect();
    let mut busy = 0usize;
    let mut result = Ok(());
    loop {
        while let Some(&index) = idle.last() {
            match coord.next_trial(&worker_name(index)) {
                Ok(Some(ctx)) => {
                    jobs[index].send(ctx).expect("worker alive");
                    idle.pop();
                    busy += 1;
                }
                Ok(None) => break,
                Err(e) => {
                    coord.fatal.get_or_insert(e);
                    break;
                }
            }
        }
        if busy == 0 {
            break;
        }
        match inbox.recv().expect("workers hold senders while busy") {
            WorkerMsg::Report { worker, trial_id, step, value, reply } => {
                let decision = coord.on_report(&worker_name(worker), trial_id, step, value);
                let _ = reply.send(decision);
            }
            WorkerMsg::Finished { worker, trial_id, outcome } => {
                coord.on_finished(&worker_name(worker), trial_id, outcome);
                idle.push(worker);
                busy -= 1;
            }
        }
    }
    drop(jobs);
    for handle in handles {
        if handle.join().is_err() && result.is_ok() {
            result = Err(Error::Other("worker thread panicked".into()));
        }
    }
    result
}


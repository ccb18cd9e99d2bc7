use std::collections::BTreeMap;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use forge::bench::{FunctionEvaluator, SurrogateEvaluator, TestFunction};
use forge::store::{self, Event, JournalRecord, RecordKind};
use forge::{
    resume_study_with, resume_with_config, run_study, run_study_with, Decision, Error, FnEvaluator, Optimizer, Outcome,
    ParameterSpec, PruningConfig, RunOptions, SearchSpace, StoreError, StudyConfig, StudyStatus, TrialState,
};

fn space() -> SearchSpace {
    SearchSpace::new(vec![
        ParameterSpec::float("x0", -5.0, 10.0),
        ParameterSpec::float("x1", 0.0, 15.0),
    ])
    .unwrap()
}

fn config(dir: &Path, optimizer: Optimizer, n_trials: usize, workers: usize) -> StudyConfig {
    let mut c = StudyConfig::for_optimizer(optimizer);
    c.direction = forge::Direction::Minimize;
    c.n_trials = n_trials;
    c.pruning = None;
    c.workers = workers;
    c.seed = 11;
    c.study_path = dir.to_path_buf();
    c
}

fn branin() -> Arc<FunctionEvaluator> {
    Arc::new(FunctionEvaluator(TestFunction::Branin))
}

/// Journal with timestamps and worker ids blanked.
fn normalized(dir: &Path) -> Vec<JournalRecord> {
    store::read_journal(dir)
        .unwrap()
        .into_iter()
        .map(|mut r| {
            r.ts = 0;
            r.worker_id.clear();
            r
        })
        .collect()
}

#[test]
fn parallel_random_study_spends_the_budget() {
    let dir = tempfile::tempdir().unwrap();
    let report = run_study_with(&space(), &config(dir.path(), Optimizer::Random, 400, 8), branin(), &RunOptions::default()).unwrap();
    assert_eq!(report.status, StudyStatus::Finished);
    assert_eq!(report.new_terminals, 400);
    let records = store::read_journal(dir.path()).unwrap();
    assert_eq!(records.iter().filter(|r| r.kind.is_terminal()).count(), 400);
    // best equals an independent scan of completed objectives
    let scan = records
        .iter()
        .filter(|r| r.kind == RecordKind::TrialCompleted)
        .map(|r| (r.trial_id.unwrap(), r.payload["objective"].as_f64().unwrap()))
        .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
        .unwrap();
    assert_eq!(report.state.best, Some(scan));
    // random search ignores history: the suggestion set matches a serial run
    let serial = tempfile::tempdir().unwrap();
    let again = run_study_with(&space(), &config(serial.path(), Optimizer::Random, 400, 1), branin(), &RunOptions::default()).unwrap();
    for (a, b) in report.trials().zip(again.trials()) {
        assert!(a.params.bit_eq(&b.params));
    }
}

#[test]
fn single_worker_runs_are_identical() {
    for optimizer in Optimizer::ALL {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let mut cfg = config(a.path(), optimizer, 60, 1);
        if optimizer == Optimizer::Pso {
            cfg.pso.n_generations = 3;
        }
        let ra = run_study_with(&space(), &cfg, branin(), &RunOptions::default()).unwrap();
        cfg.study_path = b.path().to_path_buf();
        let rb = run_study_with(&space(), &cfg, branin(), &RunOptions::default()).unwrap();
        assert_eq!(normalized(a.path()), normalized(b.path()), "{optimizer}");
        assert_eq!(ra.state.best, rb.state.best);
    }
}

#[test]
fn pso_generations_close_at_barriers() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), Optimizer::Pso, 0, 8);
    let report = run_study_with(&space(), &cfg, branin(), &RunOptions::default()).unwrap();
    assert_eq!(report.state.generations_advanced, 20);
    let records = store::read_journal(dir.path()).unwrap();
    let generation_of: BTreeMap<u64, u64> = records
        .iter()
        .filter(|r| r.kind == RecordKind::TrialCreated)
        .map(|r| (r.trial_id.unwrap(), r.payload["generation"].as_u64().unwrap()))
        .collect();
    let mut terminals_since = Vec::new();
    let mut advances = 0;
    for r in &records {
        match r.kind {
            k if k.is_terminal() => terminals_since.push(generation_of[&r.trial_id.unwrap()]),
            RecordKind::GenerationAdvanced => {
                assert_eq!(terminals_since.len(), 20);
                assert!(terminals_since.iter().all(|&g| g == advances));
                terminals_since.clear();
                advances += 1;
            }
            RecordKind::TrialClaimed => {
                // no particle of a later generation starts before its barrier
                assert_eq!(generation_of[&r.trial_id.unwrap()], advances);
            }
            _ => {}
        }
    }
    assert_eq!(advances, 20);
    assert!(terminals_since.is_empty());
}

#[test]
fn reports_below_the_median_are_pruned_at_the_first_eligible_step() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config(dir.path(), Optimizer::Random, 8, 1);
    cfg.direction = forge::Direction::Maximize;
    cfg.pruning = Some(PruningConfig { enabled: true, min_completed_trials: 5, min_reports: 3 });
    // trials 0..5 report the constant 10 and complete; later ones report 1
    let evaluator = FnEvaluator(|ctx: &forge::TrialContext, report: &mut dyn FnMut(u64, f64) -> Decision| {
        let value = if ctx.trial_id < 5 { 10.0 } else { 1.0 };
        for step in 1..=6 {
            if report(step, value) == Decision::Stop {
                return Outcome::Pruned { step };
            }
        }
        Outcome::Completed { objective: value, extra_info: None }
    });
    let report = run_study_with(&space(), &cfg, Arc::new(evaluator), &RunOptions::default()).unwrap();
    for t in report.trials() {
        if t.trial_id < 5 {
            assert_eq!(t.state, TrialState::Completed);
            assert_eq!(t.reports.len(), 6);
        } else {
            assert_eq!(t.state, TrialState::Pruned, "trial {}", t.trial_id);
            assert_eq!(t.pruned_step, Some(3));
            assert_eq!(t.reports.len(), 3);
        }
    }
}

#[test]
fn all_failed_is_reported_explicitly() {
    let dir = tempfile::tempdir().unwrap();
    let evaluator = FnEvaluator(|_: &forge::TrialContext, _: &mut dyn FnMut(u64, f64) -> Decision| Outcome::failed("exit=3"));
    let report = run_study_with(&space(), &config(dir.path(), Optimizer::Tpe, 5, 2), Arc::new(evaluator), &RunOptions::default()).unwrap();
    assert_eq!(report.status, StudyStatus::NoCompletedTrials);
    assert_eq!(report.count(TrialState::Failed), 5);
    assert!(report.best().is_none());
}

#[test]
fn invalid_outcomes_and_panics_become_failures() {
    let dir = tempfile::tempdir().unwrap();
    let evaluator = FnEvaluator(|ctx: &forge::TrialContext, _: &mut dyn FnMut(u64, f64) -> Decision| {
        if ctx.trial_id == 0 {
            panic!("boom");
        }
        Outcome::Pruned { step: 4 }
    });
    let report = run_study_with(&space(), &config(dir.path(), Optimizer::Random, 2, 1), Arc::new(evaluator), &RunOptions::default()).unwrap();
    let t0 = &report.state.trials[&0];
    let t1 = &report.state.trials[&1];
    assert_eq!(t0.failure.as_deref(), Some("evaluator panicked"));
    assert!(t1.failure.as_deref().unwrap().starts_with("invalid outcome"));
}

#[test]
fn resume_of_finished_study_runs_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), Optimizer::Tpe, 10, 1);
    run_study_with(&space(), &cfg, branin(), &RunOptions::default()).unwrap();
    let calls = Arc::new(AtomicUsize::new(0));
    let counter = calls.clone();
    let evaluator = FnEvaluator(move |_: &forge::TrialContext, _: &mut dyn FnMut(u64, f64) -> Decision| {
        counter.fetch_add(1, Ordering::SeqCst);
        Outcome::Completed { objective: 0.0, extra_info: None }
    });
    let report = resume_study_with(dir.path(), Arc::new(evaluator), &RunOptions::default()).unwrap();
    assert_eq!(report.new_terminals, 0);
    assert_eq!(calls.load(Ordering::SeqCst), 0);
    assert_eq!(report.state.terminal_count(), 10);
    assert!(matches!(
        run_study_with(&space(), &cfg, branin(), &RunOptions::default()),
        Err(Error::Store(StoreError::AlreadyExists(_)))
    ));
}

#[test]
fn resume_completes_an_interrupted_study() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), Optimizer::Tpe, 30, 1);
    // simulate a crash: 12 terminals, trial 12 claimed with a report, no terminal
    {
        let mut st = store::TrialStore::create(dir.path(), &space(), &cfg, "coordinator").unwrap();
        let mut sampler = forge::sampler::Sampler::new(space(), cfg.clone()).unwrap();
        for id in 0..13u64 {
            let forge::sampler::Suggestion::Trial(s) = sampler.suggest() else { panic!() };
            st.append(Event::TrialCreated { trial_id: id, params: s.params.clone(), generation: None }).unwrap();
            st.claim_next("worker-0").unwrap();
            if id < 12 {
                let x: Vec<f64> = s.params.values().collect();
                let objective = forge::bench::branin(&x).unwrap();
                st.append(Event::TrialCompleted { trial_id: id, objective, extra_info: None }).unwrap();
                sampler.observe(id, forge::sampler::TrialResult::Completed(objective)).unwrap();
            } else {
                st.append(Event::Report { trial_id: id, step: 1, value: 3.0 }).unwrap();
            }
        }
    }
    let report = resume_study_with(dir.path(), branin(), &RunOptions::default()).unwrap();
    assert_eq!(report.new_terminals, 18);
    let records = store::read_journal(dir.path()).unwrap();
    let mut terminal_ids: Vec<u64> = records.iter().filter(|r| r.kind.is_terminal()).map(|r| r.trial_id.unwrap()).collect();
    terminal_ids.sort();
    assert_eq!(terminal_ids, (0..30).collect::<Vec<_>>());
    assert_eq!(report.state.trials[&12].attempts, 2);
    // the interrupted trial kept its params
    let created_12 = records.iter().find(|r| r.kind == RecordKind::TrialCreated && r.trial_id == Some(12)).unwrap();
    assert_eq!(created_12.payload["params"], serde_json::to_value(&report.state.trials[&12].params).unwrap());

    // and an uninterrupted run with the same seed gives the same trials
    let clean = tempfile::tempdir().unwrap();
    let mut cfg2 = cfg.clone();
    cfg2.study_path = clean.path().to_path_buf();
    let straight = run_study_with(&space(), &cfg2, branin(), &RunOptions::default()).unwrap();
    for (a, b) in report.trials().zip(straight.trials()) {
        assert!(a.params.bit_eq(&b.params), "trial {}", a.trial_id);
    }
}

#[test]
fn edited_space_is_refused_on_resume() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config(dir.path(), Optimizer::Random, 3, 1);
    cfg.evaluator_command = Some("true".into());
    run_study_with(&space(), &cfg, branin(), &RunOptions::default()).unwrap();
    let edited = SearchSpace::new(vec![ParameterSpec::float("x0", -5.0, 11.0), ParameterSpec::float("x1", 0.0, 15.0)]).unwrap();
    let err = resume_with_config(&edited, &cfg, &RunOptions::default()).unwrap_err();
    assert!(err.to_string().contains("space hash mismatch"), "{err}");
    assert_eq!(err.exit_code(), 2);
}

#[test]
fn missing_evaluator_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config(dir.path(), Optimizer::Random, 3, 1);
    cfg.evaluator_command = Some("definitely-not-a-real-program-xyz --flag".into());
    let err = run_study(&space(), &cfg, &RunOptions::default()).unwrap_err();
    assert!(matches!(err, Error::Config(forge::ConfigError::EvaluatorNotFound(_))), "{err}");
    assert!(!store::journal_path(dir.path()).exists());
}

#[test]
fn surrogate_reports_reach_the_journal() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config(dir.path(), Optimizer::Random, 4, 2);
    cfg.direction = forge::Direction::Maximize;
    let space = forge::bench::table3_space();
    let options = RunOptions { max_steps: Some(20), report_every: Some(10), ..RunOptions::default() };
    let report = run_study_with(&space, &cfg, Arc::new(SurrogateEvaluator::default()), &options).unwrap();
    for t in report.trials() {
        assert_eq!(t.state, TrialState::Completed);
        assert_eq!(t.reports.len(), 20);
        assert_eq!(t.reports.last().unwrap().step, 200);
        let tail: f64 = t.reports[10..].iter().map(|r| r.value).sum::<f64>() / 10.0;
        assert_eq!(t.objective.unwrap(), tail);
    }
}

//! Repeated-seed comparisons behind the `bench` command.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use indexmap::IndexMap;

use super::{function_space, FunctionEvaluator, SurrogateCurveModel, SurrogateEvaluator, TestFunction, NAS_PARAMS};
use crate::config::{Direction, Optimizer, PruningConfig, StudyConfig};
use crate::error::Result;
use crate::orchestrator::{run_study_with, Evaluator, RunOptions, StudyReport};
use crate::space::SearchSpace;
use crate::store::RecordKind;

/// PSO population used when a trial budget is split into generations.
pub const PSO_POPULATION: usize = 20;

#[derive(Debug, Clone)]
pub struct BenchSettings {
    pub seeds: u64,
    pub first_seed: u64,
    /// Trials per study; PSO runs `n_trials / 20` generations of 20.
    pub n_trials: usize,
    pub workers: usize,
    /// Directory receiving one study directory per run.
    pub root: PathBuf,
}

/// A study configuration with the given budget and no pruning.
pub fn bench_config(optimizer: Optimizer, direction: Direction, n_trials: usize, seed: u64) -> StudyConfig {
    let mut config = StudyConfig::for_optimizer(optimizer);
    config.direction = direction;
    config.seed = seed;
    config.pruning = None;
    match optimizer {
        Optimizer::Pso => {
            config.pso.population_size = PSO_POPULATION.min(n_trials.max(1));
            config.pso.n_generations = (n_trials / config.pso.population_size).max(1);
        }
        Optimizer::Random | Optimizer::Tpe => config.n_trials = n_trials,
    }
    config
}

fn run(
    space: &SearchSpace,
    mut config: StudyConfig,
    evaluator: Arc<dyn Evaluator>,
    dir: PathBuf,
    workers: usize,
) -> Result<StudyReport> {
    config.study_path = dir;
    config.workers = workers.max(1);
    run_study_with(space, &config, evaluator, &RunOptions::default())
}

pub fn run_function_study(
    function: TestFunction,
    optimizer: Optimizer,
    n_trials: usize,
    seed: u64,
    dir: &Path,
) -> Result<StudyReport> {
    let config = bench_config(optimizer, Direction::Minimize, n_trials, seed);
    run(&function_space(function), config, Arc::new(FunctionEvaluator(function)), dir.to_path_buf(), 1)
}

pub fn run_surrogate_study(
    space: &SearchSpace,
    optimizer: Optimizer,
    n_trials: usize,
    seed: u64,
    pruning: Option<PruningConfig>,
    model: &SurrogateCurveModel,
    dir: &Path,
) -> Result<StudyReport> {
    let mut config = bench_config(optimizer, Direction::Maximize, n_trials, seed);
    if optimizer != Optimizer::Pso {
        config.pruning = pruning;
    }
    run(space, config, Arc::new(SurrogateEvaluator(model.clone())), dir.to_path_buf(), 1)
}

/// Results of one configuration over all seeds.
#[derive(Debug, Clone)]
pub struct SuiteRow {
    pub label: String,
    pub optimizer: Optimizer,
    pub direction: Direction,
    /// Best objective per seed (`NaN` when nothing completed).
    pub bests: Vec<f64>,
    /// REPORT records per seed.
    pub reports: Vec<usize>,
    pub studies: Vec<PathBuf>,
}

impl SuiteRow {
    fn new(label: impl Into<String>, optimizer: Optimizer, direction: Direction) -> SuiteRow {
        SuiteRow {
            label: label.into(),
            optimizer,
            direction,
            bests: Vec::new(),
            reports: Vec::new(),
            studies: Vec::new(),
        }
    }

    fn push(&mut self, report: &StudyReport) {
        self.bests.push(report.state.best.map_or(f64::NAN, |(_, v)| v));
        self.reports.push(
            report
                .state
                .trials
                .values()
                .map(|t| t.reports.len())
                .sum(),
        );
        self.studies.push(report.state.config.study_path.clone());
    }

    pub fn median_best(&self) -> f64 {
        median(&self.bests)
    }
}

/// Middle value (mean of the two middle values for even counts), NaN-free
/// inputs assumed.
pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

fn seeds(settings: &BenchSettings) -> impl Iterator<Item = u64> {
    settings.first_seed..settings.first_seed + settings.seeds
}

pub fn functions_suite(optimizers: &[Optimizer], settings: &BenchSettings) -> Result<Vec<SuiteRow>> {
    let mut rows = Vec::new();
    for function in TestFunction::ALL {
        for &optimizer in optimizers {
            let mut row = SuiteRow::new(function.name(), optimizer, Direction::Minimize);
            for seed in seeds(settings) {
                let dir = settings.root.join(format!("functions-{}-{optimizer}-s{seed}", function.name()));
                let config = bench_config(optimizer, Direction::Minimize, settings.n_trials, seed);
                let report = run(
                    &function_space(function),
                    config,
                    Arc::new(FunctionEvaluator(function)),
                    dir,
                    settings.workers,
                )?;
                row.push(&report);
            }
            rows.push(row);
        }
    }
    Ok(rows)
}

/// The surrogate over the agent space with the default pruning gates (PSO unpruned).
pub fn surrogate_suite(optimizers: &[Optimizer], settings: &BenchSettings) -> Result<Vec<SuiteRow>> {
    let space = super::table3_space();
    let model = SurrogateCurveModel::default();
    let mut rows = Vec::new();
    for &optimizer in optimizers {
        let mut row = SuiteRow::new("surrogate", optimizer, Direction::Maximize);
        for seed in seeds(settings) {
            let dir = settings.root.join(format!("surrogate-{optimizer}-s{seed}"));
            let mut config = bench_config(optimizer, Direction::Maximize, settings.n_trials, seed);
            if optimizer != Optimizer::Pso {
                config.pruning = Some(PruningConfig::default());
            }
            let report = run(&space, config, Arc::new(SurrogateEvaluator(model.clone())), dir, settings.workers)?;
            row.push(&report);
        }
        rows.push(row);
    }
    Ok(rows)
}

/// The three search-space configurations compared by the joint suite.
pub fn joint_spaces() -> Vec<(&'static str, SearchSpace)> {
    let full = super::table3_space();
    let defaults = |keep_nas: bool| -> IndexMap<String, f64> {
        full.params()
            .iter()
            .filter(|s| NAS_PARAMS.contains(&s.name.as_str()) != keep_nas)
            .map(|s| (s.name.clone(), s.fixed_value.expect("table3 has preferences")))
            .collect()
    };
    let without_nas = full.fix_parameters(&defaults(false)).expect("defaults are in bounds");
    let nas_only = full.fix_parameters(&defaults(true)).expect("defaults are in bounds");
    vec![("joint", full), ("without-nas", without_nas), ("nas-only", nas_only)]
}

pub fn joint_vs_individual(optimizer: Optimizer, settings: &BenchSettings) -> Result<Vec<SuiteRow>> {
    let model = SurrogateCurveModel::default();
    let mut rows = Vec::new();
    for (label, space) in joint_spaces() {
        let mut row = SuiteRow::new(label, optimizer, Direction::Maximize);
        for seed in seeds(settings) {
            let dir = settings.root.join(format!("joint-{label}-{optimizer}-s{seed}"));
            let config = bench_config(optimizer, Direction::Maximize, settings.n_trials, seed);
            let report = run(&space, config, Arc::new(SurrogateEvaluator(model.clone())), dir, settings.workers)?;
            row.push(&report);
        }
        rows.push(row);
    }
    Ok(rows)
}

/// Plain-text comparison table.
pub fn format_rows(rows: &[SuiteRow]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<12} {:<9} {:>6} {:>14} {:>14} {:>14} {:>10}",
        "suite", "optimizer", "seeds", "median_best", "min_best", "max_best", "reports"
    );
    for row in rows {
        let finite: Vec<f64> = row.bests.iter().copied().filter(|v| v.is_finite()).collect();
        let min = finite.iter().copied().fold(f64::INFINITY, f64::min);
        let max = finite.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let _ = writeln!(
            out,
            "{:<12} {:<9} {:>6} {:>14.6} {:>14.6} {:>14.6} {:>10}",
            row.label,
            row.optimizer.as_str(),
            row.bests.len(),
            median(&finite),
            min,
            max,
            row.reports.iter().sum::<usize>()
        );
    }
    out
}

/// Counts REPORT records in a study journal.
pub fn count_reports(dir: &Path) -> Result<usize> {
    Ok(crate::store::read_journal(dir)?.iter().filter(|r| r.kind == RecordKind::Report).count())
}

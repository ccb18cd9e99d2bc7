use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use clap::{Parser, Subcommand, ValueEnum};

use forge::bench::{child, suites, SurrogateCurveModel, TestFunction};
use forge::{parse_config, report, store, Error, Optimizer, RunOptions, StudyStatus};

#[derive(Parser)]
#[command(name = "forge", version, about = "Black-box optimization of external evaluator programs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum Suite {
    Functions,
    Surrogate,
    JointVsIndividual,
}

#[derive(Clone, Copy, ValueEnum)]
enum OptimizerArg {
    Random,
    Tpe,
    Pso,
    All,
}

#[derive(Subcommand)]
enum Command {
    /// Run (or resume) the study described by a YAML file.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        resume: bool,
        /// Per-trial evaluator timeout in seconds.
        #[arg(long)]
        timeout: Option<f64>,
        /// Fail trials that send FINAL without any REPORT.
        #[arg(long)]
        require_reports: bool,
    },
    /// Per-trial table plus the cumulative best.
    Report {
        #[arg(long, env = "FORGE_STUDY_DIR")]
        study: PathBuf,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
    },
    /// The best trial's parameters in envelope form.
    Best {
        #[arg(long, env = "FORGE_STUDY_DIR")]
        study: PathBuf,
    },
    /// Compare optimizers on built-in objectives.
    Bench {
        #[arg(long, value_enum)]
        suite: Suite,
        #[arg(long, value_enum, default_value = "all")]
        optimizer: OptimizerArg,
        #[arg(long, default_value_t = 5)]
        seeds: u64,
        /// Trials per study (PSO: generations of 20).
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long, default_value_t = 1)]
        workers: usize,
        /// Keep the study journals in this directory.
        #[arg(long)]
        keep: Option<PathBuf>,
    },
    /// Built-in evaluator programs.
    #[command(hide = true, subcommand)]
    Eval(EvalCommand),
}

#[derive(Subcommand)]
enum EvalCommand {
    Surrogate {
        #[arg(long, default_value_t = 2.0)]
        sigma: f64,
        #[arg(long, default_value_t = 100)]
        steps: u64,
    },
    Function {
        name: String,
    },
    Sleep {
        #[arg(long)]
        ms: u64,
    },
    Replay {
        #[arg(long)]
        transcript_dir: PathBuf,
    },
}

fn fail(error: Error) -> ExitCode {
    eprintln!("error: {error}");
    ExitCode::from(error.exit_code() as u8)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match Cli::parse().command {
        Command::Run { config, workers, seed, resume, timeout, require_reports } => {
            let text = match std::fs::read_to_string(&config) {
                Ok(t) => t,
                Err(e) => {
                    eprintln!("error: {}: {e}", config.display());
                    return ExitCode::from(2);
                }
            };
            let (space, mut study) = match parse_config(&text) {
                Ok(parsed) => parsed,
                Err(e) => return fail(e.into()),
            };
            if let Some(seed) = seed {
                study.seed = seed;
            }
            let options = RunOptions {
                workers,
                timeout: timeout.map(Duration::from_secs_f64),
                require_reports,
                ..RunOptions::default()
            };
            let result = if resume {
                forge::resume_with_config(&space, &study, &options)
            } else {
                forge::run_study(&space, &study, &options)
            };
            match result {
                Ok(report) => {
                    let best = report::best_trial(&report.state);
                    println!(
                        "{} trials: {} completed, {} pruned, {} failed in {:.1}s",
                        report.state.trials.len(),
                        report.count(forge::TrialState::Completed),
                        report.count(forge::TrialState::Pruned),
                        report.count(forge::TrialState::Failed),
                        report.wall_clock.as_secs_f64()
                    );
                    match (report.status, best) {
                        (StudyStatus::NoCompletedTrials, _) | (_, None) => {
                            eprintln!("no completed trials");
                            ExitCode::from(4)
                        }
                        (StudyStatus::Finished, Some(best)) => {
                            println!("best trial {} objective {}", best.envelope.trial_id, best.objective);
                            ExitCode::SUCCESS
                        }
                    }
                }
                Err(e) => fail(e),
            }
        }
        Command::Report { study, format } => {
            let state = match store::read_journal(&study).and_then(|records| store::replay(&study, &records)) {
                Ok(state) => state,
                Err(e) => return fail(e.into()),
            };
            match format {
                Format::Csv => print!("{}", report::to_csv(&state)),
                Format::Json => print!("{}", report::to_json(&state)),
            }
            ExitCode::SUCCESS
        }
        Command::Best { study } => {
            let state = match store::read_journal(&study).and_then(|records| store::replay(&study, &records)) {
                Ok(state) => state,
                Err(e) => return fail(e.into()),
            };
            match report::best_trial(&state) {
                Some(best) => {
                    println!("{}", serde_json::to_string_pretty(&best).expect("serializes"));
                    ExitCode::SUCCESS
                }
                None => {
                    eprintln!("no completed trials");
                    ExitCode::from(4)
                }
            }
        }
        Command::Bench { suite, optimizer, seeds, trials, workers, keep } => {
            let optimizers = match optimizer {
                OptimizerArg::Random => vec![Optimizer::Random],
                OptimizerArg::Tpe => vec![Optimizer::Tpe],
                OptimizerArg::Pso => vec![Optimizer::Pso],
                OptimizerArg::All => Optimizer::ALL.to_vec(),
            };
            let scratch = match keep {
                Some(_) => None,
                None => Some(tempfile::tempdir().expect("temporary directory")),
            };
            let root = keep.unwrap_or_else(|| scratch.as_ref().expect("scratch").path().to_path_buf());
            let default_trials = match suite {
                Suite::Functions => 400,
                Suite::Surrogate => 200,
                Suite::JointVsIndividual => 100,
            };
            let settings = suites::BenchSettings {
                seeds,
                first_seed: 0,
                n_trials: trials.unwrap_or(default_trials),
                workers,
                root,
            };
            let rows = match suite {
                Suite::Functions => suites::functions_suite(&optimizers, &settings),
                Suite::Surrogate => suites::surrogate_suite(&optimizers, &settings),
                Suite::JointVsIndividual => optimizers
                    .iter()
                    .map(|&o| suites::joint_vs_individual(o, &settings))
                    .collect::<Result<Vec<_>, _>>()
                    .map(|v| v.concat()),
            };
            match rows {
                Ok(rows) => {
                    print!("{}", suites::format_rows(&rows));
                    ExitCode::SUCCESS
                }
                Err(e) => fail(e),
            }
        }
        Command::Eval(eval) => {
            let code = match eval {
                EvalCommand::Surrogate { sigma, steps } => {
                    child::surrogate(&SurrogateCurveModel { noise_sigma: sigma, n_steps: steps, rate_override: None })
                }
                EvalCommand::Function { name } => match TestFunction::from_name(&name) {
                    Some(f) => child::function(f),
                    None => {
                        eprintln!("unknown function `{name}`");
                        2
                    }
                },
                EvalCommand::Sleep { ms } => child::sleep(Duration::from_millis(ms)),
                EvalCommand::Replay { transcript_dir } => child::replay(&transcript_dir),
            };
            ExitCode::from(code.clamp(0, 255) as u8)
        }
    }
}

//! Particle swarm on the 5-D sphere, following the swarm's global best
//! through the journal's generation records.

use std::sync::Arc;

use forge::bench::suites::bench_config;
use forge::bench::{function_space, FunctionEvaluator, TestFunction};
use forge::store::{self, RecordKind};
use forge::{run_study_with, Direction, Optimizer, RunOptions};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let mut config = bench_config(Optimizer::Pso, Direction::Minimize, 400, 3);
    config.study_path = dir.path().to_path_buf();
    config.workers = 4;
    println!(
        "pso w={} c1={} c2={}, {} generations of {}",
        config.pso.w, config.pso.c1, config.pso.c2, config.pso.n_generations, config.pso.population_size
    );

    let space = function_space(TestFunction::Sphere);
    let report = run_study_with(&space, &config, Arc::new(FunctionEvaluator(TestFunction::Sphere)), &RunOptions::default())?;

    for record in store::read_journal(dir.path())? {
        if record.kind != RecordKind::GenerationAdvanced {
            continue;
        }
        let generation = record.payload["generation"].as_u64().unwrap_or(0);
        let best = record.payload["swarm"]["global_best_value"].as_f64().unwrap_or(f64::NAN);
        if generation % 4 == 0 || generation == config.pso.n_generations as u64 {
            println!("generation {generation:>2}: global best {best:.5}");
        }
    }
    let best = report.best().expect("completed trials");
    println!("best trial {} at {:?}", best.trial_id, best.params.values().collect::<Vec<_>>());
    Ok(())
}

//! Random search against TPE on the Branin function.
//!
//! ```text
//! cargo run --release --example random_vs_tpe -- [seeds] [first_seed] [trials]
//! ```

use std::path::PathBuf;

use forge::bench::suites::{self, BenchSettings};
use forge::bench::{branin, TestFunction};
use forge::Optimizer;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<u64> = std::env::args().skip(1).map(|a| a.parse()).collect::<Result<_, _>>()?;
    let seeds = args.first().copied().unwrap_or(10);
    let first_seed = args.get(1).copied().unwrap_or(0);
    let n_trials = args.get(2).copied().unwrap_or(100) as usize;
    let root = tempfile::tempdir()?;

    // the known minimum, for reference
    let optimum = branin(&[std::f64::consts::PI, 2.275])?;
    println!("branin minimum {optimum:.6}, {n_trials} trials per study, seeds {first_seed}..{}", first_seed + seeds);

    for optimizer in [Optimizer::Random, Optimizer::Tpe] {
        let settings = BenchSettings {
            seeds,
            first_seed,
            n_trials,
            workers: 1,
            root: PathBuf::from(root.path()),
        };
        let mut bests = Vec::new();
        for seed in first_seed..first_seed + seeds {
            let dir = settings.root.join(format!("{optimizer}-{seed}"));
            let report = suites::run_function_study(TestFunction::Branin, optimizer, n_trials, seed, &dir)?;
            bests.push(report.state.best.map_or(f64::NAN, |(_, v)| v));
        }
        let wins = bests.iter().filter(|v| **v < 0.5).count();
        println!(
            "{:<7} median best {:.4}  ({wins}/{seeds} studies below 0.5)",
            optimizer.as_str(),
            suites::median(&bests)
        );
    }
    Ok(())
}

//! Search all twelve parameters jointly, only the non-architecture ones, or
//! only the architecture, on the interaction-bearing surrogate objective.
//!
//! ```text
//! cargo run --release --example joint_vs_individual -- [seeds] [trials]
//! ```

use forge::bench::suites::{format_rows, joint_spaces, joint_vs_individual, BenchSettings};
use forge::Optimizer;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<usize> = std::env::args().skip(1).map(|a| a.parse()).collect::<Result<_, _>>()?;
    let root = tempfile::tempdir()?;
    let settings = BenchSettings {
        seeds: args.first().copied().unwrap_or(3) as u64,
        first_seed: 0,
        n_trials: args.get(1).copied().unwrap_or(100),
        workers: 2,
        root: root.path().to_path_buf(),
    };
    for (label, space) in joint_spaces() {
        let searched: Vec<&str> = space.searchable().map(|s| s.name.as_str()).collect();
        println!("{label:<12} searches {}", searched.join(", "));
    }
    println!();
    let rows = joint_vs_individual(Optimizer::Tpe, &settings)?;
    print!("{}", format_rows(&rows));
    Ok(())
}

//! Parse a YAML experiment definition, inspect the space and pin a subset.

use forge::sampler::{sample_random, trial_rng};
use forge::{decode_value, parse_config};
use indexmap::IndexMap;

const YAML: &str = r#"
parameters:
  learning_rate:
    type: default
    category: agent
    searchable: true
    integer: false
    user_preference: 0.0003
    start: 0.0001
    stop: 0.01
  number_of_epochs:
    category: agent
    searchable: true
    integer: true
    user_preference: 10
    start: 3
    stop: 10
  policy_layers:
    category: policy
    searchable: true
    integer: true
    user_preference: 2
    start: 1
    stop: 4
  frame_skip:
    category: environment
    searchable: false
    integer: true
    user_preference: 4
    start: 1
    stop: 8

study:
  optimizer: tpe
  direction: maximize
  n_trials: 100
  evaluator_command: python train.py
  study_path: studies/example
"#;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let (space, config) = parse_config(YAML)?;
    println!("{} parameters, {} searchable", space.len(), space.dimension());
    for spec in space.params() {
        let role = if spec.searchable { "search" } else { "fixed" };
        println!(
            "  {:<18} {:?}/{:<11} [{}, {}] {role} {:?}",
            spec.name,
            spec.kind,
            spec.category.to_string(),
            spec.lower,
            spec.upper,
            spec.fixed_value
        );
    }
    println!("optimizer {} for {} trials, space hash {}", config.optimizer, config.budget(), &space.fingerprint()[..12]);

    // integers are sampled continuously and projected at the boundary
    let epochs = space.get("number_of_epochs").unwrap();
    for raw in [2.5, 6.4, 6.5, 11.7] {
        println!("decode {raw} -> {}", decode_value(epochs, raw));
    }

    let x = sample_random(&space, &mut trial_rng(config.seed, 0));
    println!("random point: {}", serde_json::Value::Object(x.to_json(&space)));

    // restrict the search to the architecture only
    let mut pinned = IndexMap::new();
    pinned.insert("learning_rate".to_string(), 0.0003);
    pinned.insert("number_of_epochs".to_string(), 10.0);
    let architecture = space.fix_parameters(&pinned)?;
    println!("architecture-only space: {} searchable", architecture.dimension());
    let x = sample_random(&architecture, &mut trial_rng(config.seed, 0));
    println!("restricted point: {}", serde_json::Value::Object(x.to_json(&architecture)));

    // validation errors come back as values
    let bad = YAML.replace("start: 3\n    stop: 10", "start: 10\n    stop: 3");
    if let Err(e) = parse_config(&bad) {
        println!("rejected: {e}");
    }
    Ok(())
}

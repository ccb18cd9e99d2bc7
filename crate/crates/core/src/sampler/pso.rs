//! Particle swarm optimization over the searchable coordinates.
//!
//! Positions live in continuous space even for integer parameters; they are
//! projected onto legal values only when a particle is handed out for
//! evaluation. Velocities are clamped to `vmax_fraction * range` per
//! dimension, and a particle that hits a bound stops there with that velocity
//! component zeroed.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::config::{Direction, PsoConfig};
use crate::error::SamplerError;
use crate::space::{ParameterSpec, SearchSpace};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwarmState {
    pub positions: Vec<Vec<f64>>,
    pub velocities: Vec<Vec<f64>>,
    pub personal_best_positions: Vec<Vec<f64>>,
    /// `None` until the particle has produced a finite objective.
    pub personal_best_values: Vec<Option<f64>>,
    pub global_best_position: Option<Vec<f64>>,
    pub global_best_value: Option<f64>,
    /// Number of completed update steps.
    pub generation: u64,
}

impl SwarmState {
    pub fn population_size(&self) -> usize {
        self.positions.len()
    }
}

/// Initial swarm: uniform positions, zero velocities, no bests yet.
pub fn pso_init<R: Rng + ?Sized>(
    space: &SearchSpace,
    cfg: &PsoConfig,
    rng: &mut R,
) -> Result<SwarmState, SamplerError> {
    let dims: Vec<&ParameterSpec> = space.searchable().collect();
    if dims.is_empty() {
        return Err(SamplerError::EmptySpace);
    }
    let positions: Vec<Vec<f64>> = (0..cfg.population_size)
        .map(|_| dims.iter().map(|s| rng.random_range(s.lower..=s.upper)).collect())
        .collect();
    Ok(SwarmState {
        velocities: vec![vec![0.0; dims.len()]; cfg.population_size],
        personal_best_positions: positions.clone(),
        personal_best_values: vec![None; cfg.population_size],
        positions,
        global_best_position: None,
        global_best_value: None,
        generation: 0,
    })
}

/// One velocity component: inertia plus cognitive and social pulls.
#[allow(clippy::too_many_arguments)]
pub fn velocity_update(
    cfg: &PsoConfig,
    velocity: f64,
    position: f64,
    personal_best: f64,
    global_best: f64,
    r1: f64,
    r2: f64,
) -> f64 {
    cfg.w * velocity + cfg.c1 * r1 * (personal_best - position) + cfg.c2 * r2 * (global_best - position)
}

/// Folds one generation's objectives into the bests, then moves every
/// particle. `evaluated` must name each particle exactly once; non-finite
/// objectives count as the worst possible value.
pub fn pso_step<R: Rng + ?Sized>(
    state: &SwarmState,
    evaluated: &[(usize, f64)],
    space: &SearchSpace,
    cfg: &PsoConfig,
    direction: Direction,
    rng: &mut R,
) -> Result<SwarmState, SamplerError> {
    let pop = state.population_size();
    let mut objectives: Vec<Option<f64>> = vec![None; pop];
    for &(index, value) in evaluated {
        let slot = objectives.get_mut(index).ok_or_else(|| SamplerError::IncompleteGeneration {
            expected: pop,
            reason: format!("particle index {index} out of range"),
        })?;
        if slot.replace(value).is_some() {
            return Err(SamplerError::IncompleteGeneration {
                expected: pop,
                reason: format!("particle {index} evaluated twice"),
            });
        }
    }
    if let Some(missing) = objectives.iter().position(Option::is_none) {
        return Err(SamplerError::IncompleteGeneration {
            expected: pop,
            reason: format!("particle {missing} not evaluated"),
        });
    }

    let mut next = state.clone();
    for (i, value) in objectives.into_iter().map(Option::unwrap).enumerate() {
        if !value.is_finite() {
            continue;
        }
        let improves = next.personal_best_values[i].map_or(true, |best| direction.better(value, best));
        if improves {
            next.personal_best_values[i] = Some(value);
            next.personal_best_positions[i] = state.positions[i].clone();
        }
    }
    for i in 0..pop {
        if let Some(value) = next.personal_best_values[i] {
            let improves = next.global_best_value.map_or(true, |best| direction.better(value, best));
            if improves {
                next.global_best_value = Some(value);
                next.global_best_position = Some(next.personal_best_positions[i].clone());
            }
        }
    }

    let dims: Vec<&ParameterSpec> = space.searchable().collect();
    for i in 0..pop {
        for (d, spec) in dims.iter().enumerate() {
            let r1: f64 = rng.random();
            let r2: f64 = rng.random();
            let x = next.positions[i][d];
            let pbest = next.personal_best_positions[i][d];
            // without any finite observation yet there is no social pull
            let gbest = next.global_best_position.as_ref().map_or(x, |g| g[d]);
            let vmax = cfg.vmax_fraction * spec.range();
            let mut v = velocity_update(cfg, next.velocities[i][d], x, pbest, gbest, r1, r2).clamp(-vmax, vmax);
            let mut moved = x + v;
            if moved < spec.lower {
                moved = spec.lower;
                v = 0.0;
            } else if moved > spec.upper {
                moved = spec.upper;
                v = 0.0;
            }
            next.positions[i][d] = moved;
            next.velocities[i][d] = v;
        }
    }
    next.generation += 1;
    Ok(next)
}

#[cfg(test)]
pub(crate) mod tests {
    use rand::{RngCore, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;

    /// Generator whose uniform draws are all exactly 0.5.
    pub(crate) struct HalfRng;

    impl RngCore for HalfRng {
        fn next_u32(&mut self) -> u32 {
            1 << 31
        }
        fn next_u64(&mut self) -> u64 {
            1 << 63
        }
        fn fill_bytes(&mut self, dst: &mut [u8]) {
            dst.fill(0)
        }
    }

    fn line() -> SearchSpace {
        SearchSpace::new(vec![ParameterSpec::float("x", 0.0, 10.0)]).unwrap()
    }

    fn two_particles(x0: f64, x1: f64) -> SwarmState {
        SwarmState {
            positions: vec![vec![x0], vec![x1]],
            velocities: vec![vec![0.0], vec![0.0]],
            personal_best_positions: vec![vec![x0], vec![x1]],
            personal_best_values: vec![Some(1.0), Some(5.0)],
            global_best_position: Some(vec![x1]),
            global_best_value: Some(5.0),
            generation: 3,
        }
    }

    #[test]
    fn half_rng_draws_half() {
        let r: f64 = HalfRng.random();
        assert_eq!(r, 0.5);
    }

    #[test]
    fn hand_computed_update() {
        let cfg = PsoConfig::default();
        let state = two_particles(4.0, 8.0);
        let next = pso_step(&state, &[(0, 1.0), (1, 5.0)], &line(), &cfg, Direction::Maximize, &mut HalfRng).unwrap();
        assert!((next.velocities[0][0] - 0.198762).abs() < 1e-12);
        assert!((next.positions[0][0] - 4.198762).abs() < 1e-12);
        // the particle sitting on both bests with zero velocity stays put
        assert_eq!(next.positions[1][0], 8.0);
        assert_eq!(next.velocities[1][0], 0.0);
        assert_eq!(next.generation, 4);
    }

    #[test]
    fn init_shape_and_determinism() {
        let dims: Vec<ParameterSpec> = (0..12).map(|i| ParameterSpec::float(format!("p{i}"), -1.0, i as f64)).collect();
        let space = SearchSpace::new(dims).unwrap();
        let cfg = PsoConfig::default();
        let a = pso_init(&space, &cfg, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let b = pso_init(&space, &cfg, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.positions.len(), 20);
        assert!(a.positions.iter().all(|p| p.len() == 12));
        assert!(a.velocities.iter().flatten().all(|&v| v == 0.0));
        for p in &a.positions {
            for (x, spec) in p.iter().zip(space.params()) {
                assert!(*x >= spec.lower && *x <= spec.upper);
            }
        }
    }

    #[test]
    fn empty_space_is_rejected() {
        let space = SearchSpace::new(vec![ParameterSpec::float("x", 0.0, 1.0).fixed_at(0.5)]).unwrap();
        let err = pso_init(&space, &PsoConfig::default(), &mut HalfRng).unwrap_err();
        assert_eq!(err, SamplerError::EmptySpace);
    }

    #[test]
    fn generation_must_be_complete() {
        let cfg = PsoConfig::default();
        let state = two_particles(1.0, 2.0);
        let space = line();
        for bad in [vec![(0, 1.0)], vec![(0, 1.0), (0, 2.0)], vec![(0, 1.0), (2, 1.0)]] {
            assert!(pso_step(&state, &bad, &space, &cfg, Direction::Maximize, &mut HalfRng).is_err());
        }
    }

    #[test]
    fn non_finite_never_becomes_best() {
        let cfg = PsoConfig::default();
        let space = line();
        let state = pso_init(&space, &PsoConfig { population_size: 2, ..cfg }, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let next = pso_step(&state, &[(0, f64::NAN), (1, 2.0)], &space, &cfg, Direction::Minimize, &mut HalfRng).unwrap();
        assert_eq!(next.personal_best_values, vec![None, Some(2.0)]);
        assert_eq!(next.global_best_value, Some(2.0));
    }

    #[test]
    fn bound_collision_zeroes_velocity() {
        let cfg = PsoConfig { w: 1.0, ..PsoConfig::default() };
        let space = line();
        let mut state = two_particles(9.9, 8.0);
        state.velocities[0][0] = 4.0;
        let next = pso_step(&state, &[(0, 1.0), (1, 5.0)], &space, &cfg, Direction::Maximize, &mut HalfRng).unwrap();
        assert_eq!(next.positions[0][0], 10.0);
        assert_eq!(next.velocities[0][0], 0.0);
    }
}

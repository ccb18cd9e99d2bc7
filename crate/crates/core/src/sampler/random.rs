use rand::Rng;

use crate::space::{Kind, ParamVector, SearchSpace};

/// Draws every searchable parameter uniformly from its inclusive range.
/// Integer parameters are drawn uniformly over their whole numbers.
pub fn sample_random<R: Rng + ?Sized>(space: &SearchSpace, rng: &mut R) -> ParamVector {
    let coords: Vec<f64> = space
        .searchable()
        .map(|spec| match spec.kind {
            Kind::Float => rng.random_range(spec.lower..=spec.upper),
            Kind::Integer => rng.random_range(spec.lower as i64..=spec.upper as i64) as f64,
        })
        .collect();
    space.assemble(&coords)
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::space::ParameterSpec;

    #[test]
    fn stays_in_listing_range() {
        let space = SearchSpace::new(vec![ParameterSpec::float("gae_lambda", 0.9, 0.95)]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            let v = sample_random(&space, &mut rng).get("gae_lambda").unwrap();
            assert!((0.9..=0.95).contains(&v));
        }
    }

    #[test]
    fn degenerate_range() {
        let space = SearchSpace::new(vec![ParameterSpec::integer("k", 5, 5)]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        assert_eq!(sample_random(&space, &mut rng).get("k"), Some(5.0));
    }

    #[test]
    fn pinned_parameters_keep_their_value() {
        let space = SearchSpace::new(vec![
            ParameterSpec::float("a", 0.0, 1.0).fixed_at(0.25),
            ParameterSpec::float("b", 0.0, 1.0),
        ])
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let v = sample_random(&space, &mut rng);
        assert_eq!(v.get("a"), Some(0.25));
        space.check(&v).unwrap();
    }

    #[test]
    fn integer_frequencies_are_uniform() {
        // frequency oracle: 10,000 draws over 8 values, each near 1/8
        let space = SearchSpace::new(vec![ParameterSpec::integer("epochs", 3, 10)]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut counts = [0usize; 8];
        let draws = 10_000;
        for _ in 0..draws {
            let v = sample_random(&space, &mut rng).get("epochs").unwrap();
            counts[(v as usize) - 3] += 1;
        }
        for c in counts {
            let freq = c as f64 / draws as f64;
            assert!((freq - 0.125).abs() <= 0.02, "{counts:?}");
        }
    }
}
